#pragma once

#include <stdexcept>
#include <string>

namespace gensched {

enum class Paradigm { MaskGit, Autoregressive, Diffusion, Flow };

inline bool is_discrete(Paradigm p) {
    return p == Paradigm::MaskGit || p == Paradigm::Autoregressive;
}
inline bool is_ode(Paradigm p) { return p == Paradigm::Diffusion || p == Paradigm::Flow; }

// Stochastic transitions admit lookahead; ODE solvers are deterministic.
inline bool has_stochastic_transition(Paradigm p) { return is_discrete(p); }

inline int action_dim(Paradigm p) { return is_ode(p) ? 2 : 4; }

inline std::string paradigm_name(Paradigm p) {
    switch (p) {
        case Paradigm::MaskGit: return "maskgit";
        case Paradigm::Autoregressive: return "ar";
        case Paradigm::Diffusion: return "diffusion";
        case Paradigm::Flow: return "flow";
    }
    return "?";
}

inline Paradigm paradigm_from_name(const std::string& s) {
    if (s == "maskgit") return Paradigm::MaskGit;
    if (s == "ar") return Paradigm::Autoregressive;
    if (s == "diffusion") return Paradigm::Diffusion;
    if (s == "flow") return Paradigm::Flow;
    throw std::invalid_argument("unknown paradigm: " + s);
}

// One step's generation policy. Per paradigm, the live fields are:
//   maskgit: m, tau, zeta, w      ar: tau, w, k, rho      ode: kappa_next, w
struct Action {
    double m = 0.0;
    double tau = 1.0;
    double zeta = 0.0;
    double w = 0.0;
    int k = 1;
    double rho = 1.0;
    double kappa_next = 0.0;
};

}  // namespace gensched
