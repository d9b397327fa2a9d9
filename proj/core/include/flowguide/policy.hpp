#pragma once

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "flowguide/chunk.hpp"
#include "flowguide/rng.hpp"

namespace flowguide {

/// Conditioning input for a velocity policy. The analytic GMM policy keys
/// mixture reweighting off scene_id; the MLP consumes the embedding.
struct Observation {
    int scene_id = 0;
    Eigen::VectorXd embedding;  // may be empty
};

/// Conditional velocity field v(A_tau, o, tau) over flattened action chunks.
/// Implementations must be immutable after construction and reentrant.
class VelocityPolicy {
public:
    virtual ~VelocityPolicy() = default;

    virtual int horizon() const = 0;
    virtual int dim() const = 0;
    int action_size() const { return horizon() * dim(); }

    /// Velocity at flattened chunk x, denoising time tau.
    virtual Eigen::VectorXd velocity(const Eigen::VectorXd& x, double tau,
                                     const Observation& obs) const = 0;

    /// Whether (dv/dx)^T g is available; needed for the exact Tweedie pullback.
    virtual bool has_velocity_vjp() const { return false; }
    virtual Eigen::VectorXd velocity_vjp(const Eigen::VectorXd& /*x*/, double /*tau*/,
                                         const Observation& /*obs*/,
                                         const Eigen::VectorXd& /*cotangent*/) const {
        throw std::logic_error("velocity_vjp not implemented for this policy");
    }
};

/// Isotropic Gaussian mixture over clean chunks with closed-form marginal
/// score, posterior mean and velocity at every noise level. Serves as the
/// analytic stand-in for a pretrained action prior.
class GmmPolicy : public VelocityPolicy {
public:
    struct Component {
        double weight;         // in (0,1], weights sum to 1
        Eigen::VectorXd mean;  // length H*D
        double sigma;          // isotropic std of the clean distribution
    };

    GmmPolicy(int horizon, int dim, std::vector<Component> components,
              std::map<int, std::vector<double>> obs_reweighting = {});

    /// Standard-normal prior over an H x D chunk (single component, mu=0, sigma=1).
    static GmmPolicy standard_normal(int horizon, int dim);

    int horizon() const override { return h_; }
    int dim() const override { return d_; }
    const std::vector<Component>& components() const { return comps_; }

    Eigen::VectorXd velocity(const Eigen::VectorXd& x, double tau,
                             const Observation& obs) const override;
    bool has_velocity_vjp() const override { return true; }
    Eigen::VectorXd velocity_vjp(const Eigen::VectorXd& x, double tau, const Observation& obs,
                                 const Eigen::VectorXd& cotangent) const override;

    /// grad_x log p_tau(x) of the noised marginal
    /// p_tau = sum_k w_k N(tau mu_k, (tau^2 sigma_k^2 + (1-tau)^2) I).
    Eigen::VectorXd marginal_score(const Eigen::VectorXd& x, double tau,
                                   const Observation& obs = {}) const;

    /// log p_tau(x); exposed so tests can finite-difference the density.
    double marginal_log_density(const Eigen::VectorXd& x, double tau,
                                const Observation& obs = {}) const;

    /// E[A1 | A_tau = x], the closed-form Tweedie target.
    Eigen::VectorXd posterior_mean(const Eigen::VectorXd& x, double tau,
                                   const Observation& obs = {}) const;

    /// Component responsibilities under the noised marginal (log-sum-exp stabilized).
    Eigen::VectorXd responsibilities(const Eigen::VectorXd& x, double tau,
                                     const Observation& obs = {}) const;

    /// Draw a clean sample from the mixture (for test oracles).
    Eigen::VectorXd sample_clean(Rng& rng, const Observation& obs = {}) const;

private:
    std::vector<double> effective_weights(const Observation& obs) const;

    int h_, d_;
    std::vector<Component> comps_;
    std::map<int, std::vector<double>> obs_weights_;
};

/// Small fully connected velocity network, input [x; tau; obs.embedding],
/// tanh hidden layers, linear output of size H*D. Trained by plain SGD on
/// the flow-matching regression target; forward/backward are hand-rolled.
class MlpPolicy : public VelocityPolicy {
public:
    MlpPolicy(int horizon, int dim, int obs_embedding_size,
              const std::vector<int>& hidden_sizes, uint64_t init_seed);

    int horizon() const override { return h_; }
    int dim() const override { return d_; }
    int obs_embedding_size() const { return obs_size_; }

    Eigen::VectorXd velocity(const Eigen::VectorXd& x, double tau,
                             const Observation& obs) const override;
    bool has_velocity_vjp() const override { return true; }
    Eigen::VectorXd velocity_vjp(const Eigen::VectorXd& x, double tau, const Observation& obs,
                                 const Eigen::VectorXd& cotangent) const override;

    /// Gradient of 0.5*||v(x,tau,obs) - target||^2 w.r.t. all parameters,
    /// accumulated into grads (same shapes as weights_/biases_). Returns the loss.
    double loss_and_param_grad(const Eigen::VectorXd& x, double tau, const Observation& obs,
                               const Eigen::VectorXd& target,
                               std::vector<Eigen::MatrixXd>& weight_grads,
                               std::vector<Eigen::VectorXd>& bias_grads) const;

    void sgd_step(const std::vector<Eigen::MatrixXd>& weight_grads,
                  const std::vector<Eigen::VectorXd>& bias_grads, double lr);

    void set_parameters(std::vector<Eigen::MatrixXd> weights, std::vector<Eigen::VectorXd> biases);

    const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
    const std::vector<Eigen::VectorXd>& biases() const { return biases_; }
    std::vector<int> layer_sizes() const;

private:
    Eigen::VectorXd assemble_input(const Eigen::VectorXd& x, double tau, const Observation& obs) const;
    void forward(const Eigen::VectorXd& input, std::vector<Eigen::VectorXd>& pre,
                 std::vector<Eigen::VectorXd>& post) const;

    int h_, d_, obs_size_;
    std::vector<Eigen::MatrixXd> weights_;  // weights_[l]: rows = out, cols = in
    std::vector<Eigen::VectorXd> biases_;
};

/// Latent -> joint-space map with an exact adjoint for gradient pullback.
class LatentDecoder {
public:
    enum class Mode { Identity, Affine };

    LatentDecoder() : mode_(Mode::Identity) {}
    LatentDecoder(Eigen::MatrixXd w, Eigen::VectorXd b);  // affine: y = W^T x + b

    Mode mode() const { return mode_; }
    int latent_dim() const { return mode_ == Mode::Identity ? -1 : static_cast<int>(w_.rows()); }
    int action_dim() const { return mode_ == Mode::Identity ? -1 : static_cast<int>(w_.cols()); }

    ActionChunk decode(const ActionChunk& latent) const;

    /// Adjoint: maps a gradient on the decoded chunk back to the latent chunk.
    Eigen::MatrixXd pullback(const Eigen::MatrixXd& grad_joint) const;

private:
    Mode mode_;
    Eigen::MatrixXd w_;
    Eigen::VectorXd b_;
};

struct TrainingRecord {
    int epoch;
    double mean_loss;
};

/// Fit an MlpPolicy to (obs, clean chunk) pairs with the flow-matching
/// regression loss. Deterministic given the seed; throws on NaN loss.
MlpPolicy train_flow_policy(const std::vector<std::pair<Observation, ActionChunk>>& dataset,
                            const std::vector<int>& hidden_sizes, int epochs, double lr,
                            uint64_t seed, std::vector<TrainingRecord>* log = nullptr);

/// Versioned JSON policy serialization (architecture + weights, or components).
void save_policy(const GmmPolicy& policy, const std::string& path);
void save_policy(const MlpPolicy& policy, const std::string& path);
std::unique_ptr<VelocityPolicy> load_policy(const std::string& path);

/// CSV dataset of flattened chunks with an obs-id column.
/// Header: obs_id,a0_0,...,a{H-1}_{D-1}.
void save_chunk_dataset(const std::vector<std::pair<Observation, ActionChunk>>& data,
                        const std::string& path);
std::vector<std::pair<Observation, ActionChunk>> load_chunk_dataset(const std::string& path);

}  // namespace flowguide
