#include "flowguide/flow.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "flowguide/rng.hpp"

namespace flowguide {

namespace {

ActionChunk draw_noise(const VelocityPolicy& policy, Rng& rng) {
    ActionChunk a0(policy.horizon(), policy.dim());
    for (int i = 0; i < a0.horizon(); ++i)
        for (int j = 0; j < a0.dim(); ++j) a0.values(i, j) = rng.normal();
    return a0;
}

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

void SamplerConfig::validate() const {
    if (num_steps < 1) throw std::invalid_argument("SamplerConfig: num_steps must be >= 1");
    if (clip_alpha <= 0.0) throw std::invalid_argument("SamplerConfig: clip_alpha must be positive");
    if (init_candidates < 1) throw std::invalid_argument("SamplerConfig: init_candidates must be >= 1");
    if (init_denoise_steps < 1)
        throw std::invalid_argument("SamplerConfig: init_denoise_steps must be >= 1");
    for (const auto& [id, lambda] : guidance_weights)
        if (lambda < 0.0)
            throw std::invalid_argument("SamplerConfig: negative guidance weight for '" + id + "'");
}

Eigen::MatrixXd conditional_velocity_target(const ActionChunk& a0, const ActionChunk& a1) {
    require_same_shape(a0.values, a1.values, "conditional_velocity_target");
    return a1.values - a0.values;
}

ActionChunk tweedie_clean_estimate(const ActionChunk& a_tau, double tau, const Eigen::MatrixXd& v) {
    if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("tweedie_clean_estimate: tau outside [0,1]");
    if (tau >= 1.0) return a_tau;
    require_same_shape(a_tau.values, v, "tweedie_clean_estimate");
    return ActionChunk(a_tau.values + (1.0 - tau) * v);
}

ActionChunk euler_step(const ActionChunk& a_tau, const Eigen::MatrixXd& v, double delta) {
    require_same_shape(a_tau.values, v, "euler_step");
    if (delta <= 0.0) throw std::invalid_argument("euler_step: delta must be positive");
    return ActionChunk(a_tau.values + delta * v);
}

ActionChunk guided_step(const ActionChunk& a_tau, const Eigen::MatrixXd& v,
                        const Eigen::MatrixXd& grad, double lambda, double alpha, double delta) {
    require_same_shape(a_tau.values, v, "guided_step");
    require_same_shape(a_tau.values, grad, "guided_step");
    if (alpha <= 0.0) throw std::invalid_argument("guided_step: alpha must be positive");
    if (!grad.allFinite())
        throw std::runtime_error("guided_step: non-finite guidance gradient");
    const Eigen::MatrixXd clipped = grad.cwiseMax(-alpha).cwiseMin(alpha);
    return ActionChunk(a_tau.values + delta * (v - lambda * clipped));
}

ActionChunk sample_unguided(const VelocityPolicy& policy, const Observation& obs,
                            const SamplerConfig& cfg, const ActionChunk* a0) {
    cfg.validate();
    Rng rng(cfg.seed);
    ActionChunk a = a0 ? *a0 : draw_noise(policy, rng);
    const int K = cfg.num_steps;
    const double delta = 1.0 / K;
    for (int k = 0; k < K; ++k) {
        const double tau = static_cast<double>(k) / K;
        const Eigen::VectorXd v = policy.velocity(a.flat(), tau, obs);
        a.values += delta * ActionChunk::from_flat(v, a.horizon(), a.dim()).values;
    }
    return a;
}

std::vector<WeightedField> apply_weight_overrides(const std::vector<WeightedField>& fields,
                                                  const SamplerConfig& cfg) {
    std::vector<WeightedField> out = fields;
    for (auto& wf : out) {
        auto it = cfg.guidance_weights.find(wf.field->id());
        if (it != cfg.guidance_weights.end()) wf.lambda = it->second;
    }
    return out;
}

GuidedSample sample_guided(const VelocityPolicy& policy, const Observation& obs,
                           const std::vector<WeightedField>& fields, const GuidanceChain& chain,
                           const SamplerConfig& cfg, const ActionChunk* a0) {
    cfg.validate();
    const std::vector<WeightedField> active = apply_weight_overrides(fields, cfg);

    Rng rng(cfg.seed);
    GuidedSample out;
    out.chunk = a0 ? *a0 : draw_noise(policy, rng);
    ActionChunk& a = out.chunk;
    const int K = cfg.num_steps;
    const double delta = 1.0 / K;
    out.diagnostics.steps.reserve(static_cast<size_t>(K));

    for (int k = 0; k < K; ++k) {
        const double tau = static_cast<double>(k) / K;
        StepDiagnostics diag;
        diag.tau = tau;

        double t0 = now_ms();
        const Eigen::VectorXd v_flat = policy.velocity(a.flat(), tau, obs);
        const Eigen::MatrixXd v = ActionChunk::from_flat(v_flat, a.horizon(), a.dim()).values;
        double t1 = now_ms();
        diag.velocity_norm = v.norm();

        Eigen::MatrixXd update = Eigen::MatrixXd::Zero(a.horizon(), a.dim());
        if (!active.empty()) {
            ChainEval eval;
            try {
                eval = composite_gradient(chain, policy, obs, active, a, tau, &v_flat,
                                          cfg.clip_alpha);
            } catch (const std::exception& err) {
                throw std::runtime_error("sample_guided: step " + std::to_string(k) + ": " +
                                         err.what());
            }
            diag.grad_norm_pre = eval.gradient.cwiseAbs().maxCoeff();
            update = std::move(eval.clipped_gradient);
            diag.clean_energy = eval.total_energy;
        }
        double t2 = now_ms();

        if (!update.allFinite())
            throw std::runtime_error("sample_guided: step " + std::to_string(k) +
                                     ": non-finite guidance term");
        diag.grad_norm_post = update.cwiseAbs().maxCoeff();
        a = ActionChunk(a.values + delta * (v - update));
        diag.wall_ms = now_ms() - t0;
        out.diagnostics.velocity_ms += t1 - t0;
        out.diagnostics.guidance_ms += t2 - t1;
        out.diagnostics.steps.push_back(diag);
    }
    return out;
}

ActionChunk select_initial_noise(const VelocityPolicy& policy, const Observation& obs,
                                 const std::vector<WeightedField>& fields,
                                 const GuidanceChain& chain, int n_candidates, int k_init,
                                 uint64_t seed) {
    if (n_candidates < 1) throw std::invalid_argument("select_initial_noise: N must be >= 1");
    if (k_init < 1) throw std::invalid_argument("select_initial_noise: k_init must be >= 1");

    Rng rng(seed);
    ActionChunk best;
    double best_energy = std::numeric_limits<double>::infinity();
    bool any_finite = false;

    SamplerConfig quick;
    quick.num_steps = k_init;

    for (int n = 0; n < n_candidates; ++n) {
        const ActionChunk candidate = draw_noise(policy, rng);
        if (n_candidates == 1) return candidate;
        const ActionChunk approx_clean = sample_unguided(policy, obs, quick, &candidate);
        double energy = std::numeric_limits<double>::quiet_NaN();
        try {
            energy = chain_energy(chain, fields, approx_clean);
        } catch (const std::exception&) {
            // non-finite candidate; skip
        }
        if (std::isfinite(energy) && energy < best_energy) {
            best_energy = energy;
            best = candidate;
            any_finite = true;
        }
    }
    if (!any_finite)
        throw std::runtime_error("select_initial_noise: all candidates had non-finite energy");
    return best;
}

}  // namespace flowguide
