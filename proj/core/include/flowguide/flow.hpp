#pragma once

#include <map>
#include <string>
#include <vector>

#include "flowguide/chunk.hpp"
#include "flowguide/fields.hpp"
#include "flowguide/policy.hpp"

namespace flowguide {

struct SamplerConfig {
    int num_steps = 16;          // K; uniform schedule, delta = 1/K
    double clip_alpha = 10.0;    // per-entry clamp on the composite gradient
    int init_candidates = 1;     // N for initial-noise selection
    int init_denoise_steps = 4;  // quick unguided steps per candidate
    uint64_t seed = 0;
    /// Optional per-field-id weight override; entries replace the lambda
    /// attached to the field list (sweeps vary weights this way).
    std::map<std::string, double> guidance_weights;

    void validate() const;
};

struct StepDiagnostics {
    double tau = 0.0;
    double velocity_norm = 0.0;
    double grad_norm_pre = 0.0;   // max-norm of the composite gradient before clipping
    double grad_norm_post = 0.0;  // after clipping; always <= clip_alpha
    double clean_energy = 0.0;    // weighted energy of the clean estimate
    double wall_ms = 0.0;
};

struct DenoiseDiagnostics {
    std::vector<StepDiagnostics> steps;
    double velocity_ms = 0.0;  // cumulative policy evaluation time
    double guidance_ms = 0.0;  // cumulative chain gradient time
};

/// Regression target of the linear interpolation path: a1 - a0.
Eigen::MatrixXd conditional_velocity_target(const ActionChunk& a0, const ActionChunk& a1);

/// Posterior-mean estimate of the clean chunk: a_tau + (1-tau) v.
/// At tau = 1 the sample is already clean and is returned unchanged.
ActionChunk tweedie_clean_estimate(const ActionChunk& a_tau, double tau, const Eigen::MatrixXd& v);

ActionChunk euler_step(const ActionChunk& a_tau, const Eigen::MatrixXd& v, double delta);

/// a_tau + delta (v - lambda clip(grad, alpha)); clip clamps each entry to
/// [-alpha, alpha]. Non-finite gradient entries are rejected.
ActionChunk guided_step(const ActionChunk& a_tau, const Eigen::MatrixXd& v,
                        const Eigen::MatrixXd& grad, double lambda, double alpha, double delta);

/// Integrate the unguided ODE from seeded standard-normal noise (or from the
/// provided a0) over K uniform Euler steps.
ActionChunk sample_unguided(const VelocityPolicy& policy, const Observation& obs,
                            const SamplerConfig& cfg, const ActionChunk* a0 = nullptr);

struct GuidedSample {
    ActionChunk chunk;
    DenoiseDiagnostics diagnostics;
};

/// Guided denoising: per step, velocity + weighted chain gradient, clipped,
/// Euler update. With no fields this reproduces sample_unguided bit-exactly.
GuidedSample sample_guided(const VelocityPolicy& policy, const Observation& obs,
                           const std::vector<WeightedField>& fields, const GuidanceChain& chain,
                           const SamplerConfig& cfg, const ActionChunk* a0 = nullptr);

/// Best-of-N initial noise: each candidate is denoised with k_init unguided
/// steps and scored by the weighted chain energy of its approximate clean
/// chunk; the argmin noise is returned (ties -> lowest candidate index).
ActionChunk select_initial_noise(const VelocityPolicy& policy, const Observation& obs,
                                 const std::vector<WeightedField>& fields,
                                 const GuidanceChain& chain, int n_candidates, int k_init,
                                 uint64_t seed);

/// Field list with SamplerConfig weight overrides applied.
std::vector<WeightedField> apply_weight_overrides(const std::vector<WeightedField>& fields,
                                                  const SamplerConfig& cfg);

}  // namespace flowguide
