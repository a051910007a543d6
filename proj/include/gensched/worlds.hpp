#pragma once

// Frozen, analytically exact target distributions that stand in for a
// pretrained generator: an enumerable token-grid energy model for the
// discrete paradigms and class-conditional 2-D Gaussian mixtures for the
// continuous ones. All queries are pure; worlds are immutable once built.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "gensched/actions.hpp"
#include "gensched/linalg.hpp"
#include "gensched/rng.hpp"

namespace gensched {

inline constexpr std::size_t kMaxEnumeration = 1u << 20;

// ---------------------------------------------------------------------------
// Discrete token-grid world
// ---------------------------------------------------------------------------

// Tokens live on an r x c grid with nearest-neighbor pairwise energies.
// Configurations are indexed as base-V numbers with position 0 as the most
// significant digit, so a length-k prefix owns a contiguous index block.
class DiscreteWorld {
public:
    DiscreteWorld(int grid_size, int vocab_size, int class_count, std::uint64_t seed) {
        if (grid_size < 1 || vocab_size < 2 || class_count < 1)
            throw std::invalid_argument("DiscreteWorld: bad sizes");
        double table_size = std::pow(static_cast<double>(vocab_size), grid_size);
        if (table_size > static_cast<double>(kMaxEnumeration))
            throw std::invalid_argument("DiscreteWorld: V^G exceeds enumeration bound");
        g_ = grid_size;
        v_ = vocab_size;
        c_ = class_count;
        seed_ = seed;
        n_configs_ = 1;
        for (int i = 0; i < g_; ++i) n_configs_ *= v_;

        // pick the most square grid factorization for the adjacency structure
        rows_ = 1;
        for (int r = 1; r * r <= g_; ++r)
            if (g_ % r == 0) rows_ = r;
        cols_ = g_ / rows_;
        for (int r = 0; r < rows_; ++r)
            for (int cc = 0; cc < cols_; ++cc) {
                if (cc + 1 < cols_) edges_.push_back({r * cols_ + cc, r * cols_ + cc + 1});
                if (r + 1 < rows_) edges_.push_back({r * cols_ + cc, (r + 1) * cols_ + cc});
            }

        RngStream rng = derive_stream(seed, stream_tag("discrete_world"));
        unary_.assign(static_cast<std::size_t>(c_) * g_ * v_, 0.0);
        for (double& e : unary_) e = rng.uniform(-1.0, 1.0);
        pair_.assign(edges_.size() * c_ * v_ * v_, 0.0);
        for (double& e : pair_) e = rng.uniform(-1.0, 1.0);

        log_table_.resize(c_);
        prob_table_.resize(c_);
        prefix_.resize(c_);
        std::vector<int> tokens(g_);
        for (int cls = 0; cls < c_; ++cls) {
            std::vector<double>& lt = log_table_[cls];
            lt.resize(n_configs_);
            for (std::size_t idx = 0; idx < n_configs_; ++idx) {
                decode(idx, tokens);
                double e = 0.0;
                for (int i = 0; i < g_; ++i) e += unary(cls, i, tokens[i]);
                for (std::size_t ei = 0; ei < edges_.size(); ++ei)
                    e += pairwise(cls, ei, tokens[edges_[ei].first], tokens[edges_[ei].second]);
                lt[idx] = e;
            }
            const double lz = logsumexp(lt.data(), lt.size());
            std::vector<double>& pt = prob_table_[cls];
            pt.resize(n_configs_);
            for (std::size_t idx = 0; idx < n_configs_; ++idx) {
                lt[idx] -= lz;
                pt[idx] = std::exp(lt[idx]);
            }
            build_prefix_pyramid(cls);
        }
    }

    int grid_size() const { return g_; }
    int vocab_size() const { return v_; }
    int class_count() const { return c_; }
    std::size_t config_count() const { return n_configs_; }
    std::uint64_t seed() const { return seed_; }

    const std::vector<double>& table(int cls) const { return prob_table_.at(cls); }
    const std::vector<double>& log_table(int cls) const { return log_table_.at(cls); }

    std::size_t encode(const std::vector<int>& tokens) const {
        std::size_t idx = 0;
        for (int i = 0; i < g_; ++i) idx = idx * v_ + tokens[i];
        return idx;
    }
    void decode(std::size_t idx, std::vector<int>& tokens) const {
        tokens.resize(g_);
        for (int i = g_ - 1; i >= 0; --i) {
            tokens[i] = static_cast<int>(idx % v_);
            idx /= v_;
        }
    }

    // Exact p(x_pos = v | observed, class) by marginalizing over every
    // completion of the unobserved positions. observed[i] = -1 means masked.
    std::vector<double> token_conditional(const std::vector<int>& observed, int cls,
                                          int position) const {
        check_class(cls);
        if (observed.size() != static_cast<std::size_t>(g_))
            throw std::invalid_argument("token_conditional: grid size mismatch");
        if (observed[position] >= 0)
            throw std::invalid_argument("token_conditional: position already observed");
        std::vector<int> free_pos;
        for (int i = 0; i < g_; ++i)
            if (observed[i] < 0 && i != position) free_pos.push_back(i);

        std::vector<double> mass(v_, 0.0);
        std::vector<int> tokens(observed);
        std::size_t n_completions = 1;
        for (std::size_t i = 0; i < free_pos.size(); ++i) n_completions *= v_;
        for (int val = 0; val < v_; ++val) {
            tokens[position] = val;
            for (std::size_t comp = 0; comp < n_completions; ++comp) {
                std::size_t rem = comp;
                for (int fp : free_pos) {
                    tokens[fp] = static_cast<int>(rem % v_);
                    rem /= v_;
                }
                mass[val] += prob_table_[cls][encode(tokens)];
            }
        }
        double total = 0.0;
        for (double m : mass) total += m;
        for (double& m : mass) m /= total;
        return mass;
    }

    // Class-marginalized (unconditional) conditional via the uniform mixture.
    std::vector<double> token_conditional_uncond(const std::vector<int>& observed,
                                                 int position) const {
        std::vector<double> acc(v_, 0.0);
        for (int cls = 0; cls < c_; ++cls) {
            const double w = prefix_mass_of_observed(observed, cls);
            const std::vector<double> cond = token_conditional(observed, cls, position);
            for (int val = 0; val < v_; ++val) acc[val] += w * cond[val];
        }
        double total = 0.0;
        for (double m : acc) total += m;
        for (double& m : acc) m /= total;
        return acc;
    }

    // Exact next-token conditionals for index-order generation, O(V) per
    // query via the prefix-marginal pyramid. Equals token_conditional with
    // `prefix` observed (pinned by tests).
    std::vector<double> ar_conditional(const std::vector<int>& prefix, int cls) const {
        check_class(cls);
        const int t = static_cast<int>(prefix.size());
        if (t >= g_) throw std::invalid_argument("ar_conditional: prefix already complete");
        std::size_t pidx = 0;
        for (int tok : prefix) pidx = pidx * v_ + tok;
        const std::vector<double>& child = prefix_[cls][t + 1];
        std::vector<double> out(v_);
        double total = 0.0;
        for (int val = 0; val < v_; ++val) {
            out[val] = child[pidx * v_ + val];
            total += out[val];
        }
        for (double& p : out) p /= total;
        return out;
    }

    std::vector<double> ar_conditional_uncond(const std::vector<int>& prefix) const {
        std::vector<double> acc(v_, 0.0);
        const int t = static_cast<int>(prefix.size());
        std::size_t pidx = 0;
        for (int tok : prefix) pidx = pidx * v_ + tok;
        for (int cls = 0; cls < c_; ++cls) {
            const std::vector<double>& child = prefix_[cls][t + 1];
            for (int val = 0; val < v_; ++val) acc[val] += child[pidx * v_ + val];
        }
        double total = 0.0;
        for (double p : acc) total += p;
        for (double& p : acc) p /= total;
        return acc;
    }

    double log_density(const std::vector<int>& tokens, int cls) const {
        check_class(cls);
        return log_table_[cls][encode(tokens)];
    }
    double log_density_uncond(const std::vector<int>& tokens) const {
        std::vector<double> lps(c_);
        const std::size_t idx = encode(tokens);
        for (int cls = 0; cls < c_; ++cls) lps[cls] = log_table_[cls][idx];
        return logsumexp(lps.data(), lps.size()) - std::log(static_cast<double>(c_));
    }

    // Ancestral draw from the exact table.
    std::vector<int> sample(int cls, RngStream& rng) const {
        check_class(cls);
        std::vector<int> prefix;
        prefix.reserve(g_);
        for (int i = 0; i < g_; ++i) {
            const std::vector<double> cond = ar_conditional(prefix, cls);
            prefix.push_back(static_cast<int>(rng.categorical(cond)));
        }
        return prefix;
    }

    // Exact distribution over final grids for a fixed action sequence.
    // Supports AR and MaskGIT with zeta = 0 (deterministic confidence
    // ranking); stochastic remasking branches over continuous Gumbel noise
    // and is rejected. This is the brute-force oracle route and deliberately
    // reimplements the action-modified conditionals.
    std::vector<double> enumerate_final_distribution(Paradigm paradigm,
                                                     const std::vector<Action>& actions,
                                                     int cls) const;

private:
    double unary(int cls, int pos, int val) const {
        return unary_[(static_cast<std::size_t>(cls) * g_ + pos) * v_ + val];
    }
    double pairwise(int cls, std::size_t edge, int u, int w) const {
        return pair_[((edge * c_ + cls) * v_ + u) * v_ + w];
    }
    void check_class(int cls) const {
        if (cls < 0 || cls >= c_) throw std::invalid_argument("DiscreteWorld: bad class");
    }

    void build_prefix_pyramid(int cls) {
        std::vector<std::vector<double>>& pyr = prefix_[cls];
        pyr.resize(g_ + 1);
        pyr[g_] = prob_table_[cls];
        for (int k = g_; k-- > 0;) {
            std::vector<double>& up = pyr[k];
            const std::vector<double>& dn = pyr[k + 1];
            up.assign(dn.size() / v_, 0.0);
            for (std::size_t i = 0; i < up.size(); ++i) {
                double s = 0.0;
                for (int val = 0; val < v_; ++val) s += dn[i * v_ + val];
                up[i] = s;
            }
        }
    }

    // Mass of the observed positions under a class, used as the class weight
    // in unconditional conditionals.
    double prefix_mass_of_observed(const std::vector<int>& observed, int cls) const {
        std::vector<int> free_pos;
        for (int i = 0; i < g_; ++i)
            if (observed[i] < 0) free_pos.push_back(i);
        std::size_t n_completions = 1;
        for (std::size_t i = 0; i < free_pos.size(); ++i) n_completions *= v_;
        std::vector<int> tokens(observed);
        double total = 0.0;
        for (std::size_t comp = 0; comp < n_completions; ++comp) {
            std::size_t rem = comp;
            for (int fp : free_pos) {
                tokens[fp] = static_cast<int>(rem % v_);
                rem /= v_;
            }
            total += prob_table_[cls][encode(tokens)];
        }
        return total;
    }

    int g_ = 0, v_ = 0, c_ = 0;
    int rows_ = 1, cols_ = 1;
    std::uint64_t seed_ = 0;
    std::size_t n_configs_ = 0;
    std::vector<std::pair<int, int>> edges_;
    std::vector<double> unary_, pair_;
    std::vector<std::vector<double>> log_table_, prob_table_;
    std::vector<std::vector<std::vector<double>>> prefix_;  // [class][k][prefix]
};

inline DiscreteWorld build_discrete_world(int grid_size, int vocab_size, int class_count,
                                          std::uint64_t seed) {
    return DiscreteWorld(grid_size, vocab_size, class_count, seed);
}

// ---------------------------------------------------------------------------
// Continuous 2-D Gaussian-mixture world
// ---------------------------------------------------------------------------

struct GmmComponent {
    double weight = 1.0;
    Vec2 mean;
    Mat2 cov = Mat2::identity();
};

class GmmWorld {
public:
    GmmWorld(std::vector<std::vector<GmmComponent>> classes, int kappa_max = 1000,
             double delta = 1e-4)
        : classes_(std::move(classes)), kappa_max_(kappa_max), delta_(delta) {
        if (classes_.empty()) throw std::invalid_argument("GmmWorld: need at least one class");
        for (auto& comps : classes_) {
            if (comps.empty()) throw std::invalid_argument("GmmWorld: empty class");
            double total = 0.0;
            for (auto& comp : comps) {
                if (!comp.cov.spd()) throw std::invalid_argument("GmmWorld: covariance not SPD");
                if (!(comp.weight > 0.0)) throw std::invalid_argument("GmmWorld: bad weight");
                total += comp.weight;
            }
            for (auto& comp : comps) comp.weight /= total;
        }
    }

    static GmmWorld random(int class_count, int max_components, std::uint64_t seed,
                           int kappa_max = 1000, double delta = 1e-4) {
        if (class_count < 1 || max_components < 1)
            throw std::invalid_argument("GmmWorld::random: bad sizes");
        RngStream rng = derive_stream(seed, stream_tag("gmm_world"));
        std::vector<std::vector<GmmComponent>> classes(class_count);
        for (auto& comps : classes) {
            const int n = 1 + static_cast<int>(rng.uniform_int(max_components));
            comps.resize(n);
            for (auto& comp : comps) {
                comp.weight = rng.uniform(0.5, 1.5);
                comp.mean = {rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0)};
                const double e1 = rng.uniform(0.05, 0.5);
                const double e2 = rng.uniform(0.05, 0.5);
                const double th = rng.uniform(0.0, 3.14159265358979323846);
                const double ct = std::cos(th), st = std::sin(th);
                comp.cov = {ct * ct * e1 + st * st * e2, ct * st * (e1 - e2),
                            st * st * e1 + ct * ct * e2};
            }
        }
        return GmmWorld(std::move(classes), kappa_max, delta);
    }

    int class_count() const { return static_cast<int>(classes_.size()); }
    int kappa_max() const { return kappa_max_; }
    double delta() const { return delta_; }
    const std::vector<GmmComponent>& components(int cls) const { return classes_.at(cls); }

    // Strictly decreasing cosine schedule mapped onto [delta, 1-delta].
    double alpha_bar(double kappa) const {
        if (kappa < 0.0 || kappa > kappa_max_)
            throw std::invalid_argument("alpha_bar: kappa out of range");
        const double u = kappa / kappa_max_;
        const double c = std::cos(1.5707963267948966 * u);
        return delta_ + (1.0 - 2.0 * delta_) * c * c;
    }

    // Exact noise prediction for the diffusion ODE at integer-grid kappa:
    // eps*(x,k) = -sqrt(1-abar) * grad_x log p_k(x), where p_k is the mixture
    // noised to level abar(k). cls < 0 queries the unconditional mixture.
    Vec2 eps_score(const Vec2& x, double kappa, int cls) const {
        const double ab = alpha_bar(kappa);
        const Vec2 score = noised_score(x, ab, cls);
        return score * (-std::sqrt(1.0 - ab));
    }

    // Exact marginal velocity E[x1 - x0 | x_kappa = x] for the rectified-flow
    // interpolation x_kappa = kappa*x1 + (1-kappa)*x0, x1 ~ N(0,I).
    Vec2 velocity(const Vec2& x, double kappa, int cls) const {
        if (!(kappa > 0.0) || kappa > 1.0)
            throw std::invalid_argument("velocity: kappa must lie in (0, 1]");
        double total = 0.0;
        Vec2 acc{0.0, 0.0};
        for_components(cls, [&](double prior, const GmmComponent& comp) {
            const Vec2 m = comp.mean * (1.0 - kappa);
            const Mat2 s = comp.cov * ((1.0 - kappa) * (1.0 - kappa)) + Mat2::diag(kappa * kappa);
            const double lw = std::log(prior) + gaussian2_log_density(x, m, s);
            const double w = std::exp(lw);
            const Vec2 u = s.inverse().mul(x - m);
            const Vec2 v = u * kappa - comp.cov.mul(u) * (1.0 - kappa) - comp.mean;
            acc += v * w;
            total += w;
        });
        if (!(total > 0.0)) {
            // far tail: fall back to the dominant component in log space
            double best = -1e300;
            Vec2 bestv{0.0, 0.0};
            for_components(cls, [&](double prior, const GmmComponent& comp) {
                const Vec2 m = comp.mean * (1.0 - kappa);
                const Mat2 s =
                    comp.cov * ((1.0 - kappa) * (1.0 - kappa)) + Mat2::diag(kappa * kappa);
                const double lw = std::log(prior) + gaussian2_log_density(x, m, s);
                if (lw > best) {
                    best = lw;
                    const Vec2 u = s.inverse().mul(x - m);
                    bestv = u * kappa - comp.cov.mul(u) * (1.0 - kappa) - comp.mean;
                }
            });
            return bestv;
        }
        return acc * (1.0 / total);
    }

    double log_density(const Vec2& x, int cls) const {
        std::vector<double> lps;
        for_components(cls, [&](double prior, const GmmComponent& comp) {
            lps.push_back(std::log(prior) + gaussian2_log_density(x, comp.mean, comp.cov));
        });
        return logsumexp(lps.data(), lps.size());
    }

    // Log density of the mixture noised to alpha-bar level ab.
    double noised_log_density(const Vec2& x, double ab, int cls) const {
        std::vector<double> lps;
        for_components(cls, [&](double prior, const GmmComponent& comp) {
            const Vec2 m = comp.mean * std::sqrt(ab);
            const Mat2 s = comp.cov * ab + Mat2::diag(1.0 - ab);
            lps.push_back(std::log(prior) + gaussian2_log_density(x, m, s));
        });
        return logsumexp(lps.data(), lps.size());
    }

    Vec2 sample(int cls, RngStream& rng) const {
        const std::vector<GmmComponent>& comps = classes_.at(cls);
        std::vector<double> w(comps.size());
        for (std::size_t i = 0; i < comps.size(); ++i) w[i] = comps[i].weight;
        const GmmComponent& comp = comps[rng.categorical(w)];
        const std::array<double, 3> l = comp.cov.cholesky();
        const double z1 = rng.gaussian(), z2 = rng.gaussian();
        return {comp.mean.x + l[0] * z1, comp.mean.y + l[1] * z1 + l[2] * z2};
    }

    // Exact first two moments of a class mixture (cls < 0: unconditional).
    void moments(int cls, Vec2& mean, Mat2& cov) const {
        mean = {0.0, 0.0};
        for_components(cls, [&](double prior, const GmmComponent& comp) {
            mean += comp.mean * prior;
        });
        Mat2 second{0.0, 0.0, 0.0};
        for_components(cls, [&](double prior, const GmmComponent& comp) {
            second.a += prior * (comp.cov.a + comp.mean.x * comp.mean.x);
            second.b += prior * (comp.cov.b + comp.mean.x * comp.mean.y);
            second.c += prior * (comp.cov.c + comp.mean.y * comp.mean.y);
        });
        cov = {second.a - mean.x * mean.x, second.b - mean.x * mean.y,
               second.c - mean.y * mean.y};
    }

private:
    Vec2 noised_score(const Vec2& x, double ab, int cls) const {
        const double sab = std::sqrt(ab);
        std::vector<double> lws;
        std::vector<Vec2> grads;
        for_components(cls, [&](double prior, const GmmComponent& comp) {
            const Vec2 m = comp.mean * sab;
            const Mat2 s = comp.cov * ab + Mat2::diag(1.0 - ab);
            lws.push_back(std::log(prior) + gaussian2_log_density(x, m, s));
            grads.push_back(s.inverse().mul(x - m) * -1.0);
        });
        const double lse = logsumexp(lws.data(), lws.size());
        Vec2 score{0.0, 0.0};
        for (std::size_t i = 0; i < lws.size(); ++i) score += grads[i] * std::exp(lws[i] - lse);
        return score;
    }

    template <typename F>
    void for_components(int cls, F&& f) const {
        if (cls >= 0) {
            for (const GmmComponent& comp : classes_.at(cls)) f(comp.weight, comp);
        } else {
            const double cw = 1.0 / classes_.size();
            for (const auto& comps : classes_)
                for (const GmmComponent& comp : comps) f(cw * comp.weight, comp);
        }
    }

    std::vector<std::vector<GmmComponent>> classes_;
    int kappa_max_;
    double delta_;
};

// ---------------------------------------------------------------------------
// Enumeration oracle (independent route; duplicates the distribution
// transforms on purpose — do not fold into the sampler implementation)
// ---------------------------------------------------------------------------

namespace oracle_detail {

// guided temperature/top-k/top-p transform, written directly from the rules.
inline std::vector<double> modified_distribution(const std::vector<double>& cond,
                                                 const std::vector<double>& uncond,
                                                 double tau, double w, int k, double rho) {
    const int v = static_cast<int>(cond.size());
    std::vector<double> logits(v);
    for (int i = 0; i < v; ++i)
        logits[i] = (1.0 + w) * std::log(cond[i]) - w * std::log(uncond[i]);
    std::vector<double> probs(v, 0.0);
    if (tau < 1e-12) {
        int best = 0;
        for (int i = 1; i < v; ++i)
            if (logits[i] > logits[best]) best = i;
        probs[best] = 1.0;
        return probs;
    }
    for (double& l : logits) l /= tau;
    const double lse = logsumexp(logits.data(), logits.size());
    for (int i = 0; i < v; ++i) probs[i] = std::exp(logits[i] - lse);

    std::vector<int> order(v);
    for (int i = 0; i < v; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return probs[a] > probs[b]; });
    k = std::max(1, std::min(k, v));
    std::vector<bool> keep(v, false);
    double kept_mass = 0.0;
    for (int r = 0; r < k; ++r) {
        keep[order[r]] = true;
        kept_mass += probs[order[r]];
    }
    // nucleus on the renormalized top-k set; always keeps the argmax
    double cum = 0.0;
    for (int r = 0; r < k; ++r) {
        cum += probs[order[r]] / kept_mass;
        if (r > 0 && cum - probs[order[r]] / kept_mass >= rho - 1e-12) keep[order[r]] = false;
    }
    double total = 0.0;
    for (int i = 0; i < v; ++i) {
        if (!keep[i]) probs[i] = 0.0;
        total += probs[i];
    }
    for (double& p : probs) p /= total;
    return probs;
}

}  // namespace oracle_detail

inline std::vector<double> DiscreteWorld::enumerate_final_distribution(
    Paradigm paradigm, const std::vector<Action>& actions, int cls) const {
    check_class(cls);
    if (paradigm == Paradigm::Autoregressive) {
        if (actions.size() != static_cast<std::size_t>(g_))
            throw std::invalid_argument("enumerate_final_distribution: need G actions");
        std::vector<double> dist(n_configs_, 0.0);
        struct Node {
            std::vector<int> prefix;
            double prob;
        };
        std::vector<Node> frontier{{{}, 1.0}};
        for (int t = 0; t < g_; ++t) {
            const Action& a = actions[t];
            std::vector<Node> next;
            next.reserve(frontier.size() * v_);
            for (const Node& node : frontier) {
                const std::vector<double> q = oracle_detail::modified_distribution(
                    ar_conditional(node.prefix, cls), ar_conditional_uncond(node.prefix),
                    a.tau, a.w, a.k, a.rho);
                for (int val = 0; val < v_; ++val) {
                    if (q[val] <= 0.0) continue;
                    Node child{node.prefix, node.prob * q[val]};
                    child.prefix.push_back(val);
                    next.push_back(std::move(child));
                }
            }
            frontier = std::move(next);
        }
        for (const Node& node : frontier) dist[encode(node.prefix)] += node.prob;
        return dist;
    }
    if (paradigm != Paradigm::MaskGit)
        throw std::invalid_argument("enumerate_final_distribution: discrete paradigms only");

    const int horizon = static_cast<int>(actions.size());
    for (const Action& a : actions)
        if (a.zeta != 0.0)
            throw std::invalid_argument(
                "enumerate_final_distribution: stochastic remasking (zeta>0) unsupported");

    // states keyed by the committed grid (token+1 in base V+1; 0 = masked)
    std::map<std::size_t, double> states;
    states[0] = 1.0;
    const auto state_key = [&](const std::vector<int>& grid) {
        std::size_t key = 0;
        for (int i = 0; i < g_; ++i) key = key * (v_ + 1) + (grid[i] + 1);
        return key;
    };
    const auto state_decode = [&](std::size_t key, std::vector<int>& grid) {
        grid.resize(g_);
        for (int i = g_ - 1; i >= 0; --i) {
            grid[i] = static_cast<int>(key % (v_ + 1)) - 1;
            key /= v_ + 1;
        }
    };

    for (int t = 0; t < horizon; ++t) {
        const Action& a = actions[t];
        std::map<std::size_t, double> next;
        std::vector<int> grid, masked;
        for (const auto& [key, prob] : states) {
            state_decode(key, grid);
            masked.clear();
            for (int i = 0; i < g_; ++i)
                if (grid[i] < 0) masked.push_back(i);
            if (masked.empty())
                throw std::invalid_argument("enumerate_final_distribution: no masked position");
            const int u = static_cast<int>(masked.size());
            int n_next = static_cast<int>(std::llround(a.m * g_));
            if (t + 1 == horizon) n_next = 0;
            else n_next = std::max(n_next, horizon - (t + 1));
            n_next = std::min(n_next, u - 1);
            n_next = std::max(n_next, 0);

            std::vector<std::vector<double>> q(u);
            for (int i = 0; i < u; ++i)
                q[i] = oracle_detail::modified_distribution(
                    token_conditional(grid, cls, masked[i]),
                    token_conditional_uncond(grid, masked[i]), a.tau, a.w, v_, 1.0);

            std::size_t joint = 1;
            for (int i = 0; i < u; ++i) joint *= v_;
            std::vector<int> draw(u);
            for (std::size_t comb = 0; comb < joint; ++comb) {
                std::size_t rem = comb;
                double p = 1.0;
                for (int i = 0; i < u; ++i) {
                    draw[i] = static_cast<int>(rem % v_);
                    rem /= v_;
                    p *= q[i][draw[i]];
                }
                if (p <= 0.0) continue;
                // rank by confidence (log q of the drawn token), ties by index
                std::vector<int> order(u);
                for (int i = 0; i < u; ++i) order[i] = i;
                std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
                    return q[x][draw[x]] > q[y][draw[y]];
                });
                std::vector<int> child(grid);
                for (int r = 0; r < u - n_next; ++r) {
                    const int i = order[r];
                    child[masked[i]] = draw[i];
                }
                next[state_key(child)] += prob * p;
            }
        }
        states = std::move(next);
    }

    std::vector<double> dist(n_configs_, 0.0);
    std::vector<int> grid;
    for (const auto& [key, prob] : states) {
        state_decode(key, grid);
        for (int tok : grid)
            if (tok < 0)
                throw std::runtime_error("enumerate_final_distribution: incomplete terminal grid");
        dist[encode(grid)] += prob;
    }
    return dist;
}

}  // namespace gensched
