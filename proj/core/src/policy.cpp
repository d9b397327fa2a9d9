#include "flowguide/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace flowguide {

namespace {

// Clamp used for the tau=1 endpoint where (E[A1|x] - x)/(1-tau) degenerates.
constexpr double kTauCeiling = 1.0 - 1e-6;

double log_normal_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, double var) {
    const double n = static_cast<double>(x.size());
    const double log2pi = 1.8378770664093454836;
    return -0.5 * (n * (log2pi + std::log(var)) + (x - mean).squaredNorm() / var);
}

}  // namespace

GmmPolicy::GmmPolicy(int horizon, int dim, std::vector<Component> components,
                     std::map<int, std::vector<double>> obs_reweighting)
    : h_(horizon), d_(dim), comps_(std::move(components)), obs_weights_(std::move(obs_reweighting)) {
    if (h_ < 1 || d_ < 1) throw std::invalid_argument("GmmPolicy: H and D must be >= 1");
    if (comps_.empty()) throw std::invalid_argument("GmmPolicy: no components");
    double wsum = 0.0;
    for (const auto& c : comps_) {
        if (c.mean.size() != static_cast<Eigen::Index>(h_) * d_)
            throw std::invalid_argument("GmmPolicy: component mean size != H*D");
        if (c.sigma <= 0.0) throw std::invalid_argument("GmmPolicy: sigma must be positive");
        if (c.weight <= 0.0) throw std::invalid_argument("GmmPolicy: weights must be positive");
        wsum += c.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-9) throw std::invalid_argument("GmmPolicy: weights must sum to 1");
    for (const auto& [id, w] : obs_weights_) {
        if (w.size() != comps_.size())
            throw std::invalid_argument("GmmPolicy: obs reweighting size mismatch for scene " +
                                        std::to_string(id));
    }
}

GmmPolicy GmmPolicy::standard_normal(int horizon, int dim) {
    Component c{1.0, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(horizon) * dim), 1.0};
    return GmmPolicy(horizon, dim, {std::move(c)});
}

std::vector<double> GmmPolicy::effective_weights(const Observation& obs) const {
    std::vector<double> w(comps_.size());
    for (size_t k = 0; k < comps_.size(); ++k) w[k] = comps_[k].weight;
    auto it = obs_weights_.find(obs.scene_id);
    if (it != obs_weights_.end()) {
        double sum = 0.0;
        for (size_t k = 0; k < w.size(); ++k) {
            w[k] *= it->second[k];
            sum += w[k];
        }
        if (sum <= 0.0) throw std::runtime_error("GmmPolicy: observation reweighting zeroed all components");
        for (auto& v : w) v /= sum;
    }
    return w;
}

Eigen::VectorXd GmmPolicy::responsibilities(const Eigen::VectorXd& x, double tau,
                                            const Observation& obs) const {
    const auto w = effective_weights(obs);
    Eigen::VectorXd logp(static_cast<Eigen::Index>(comps_.size()));
    for (size_t k = 0; k < comps_.size(); ++k) {
        const auto& c = comps_[k];
        const double var = tau * tau * c.sigma * c.sigma + (1.0 - tau) * (1.0 - tau);
        logp(static_cast<Eigen::Index>(k)) =
            std::log(w[k]) + log_normal_density(x, tau * c.mean, var);
    }
    const double m = logp.maxCoeff();
    Eigen::VectorXd r = (logp.array() - m).exp();
    r /= r.sum();
    return r;
}

double GmmPolicy::marginal_log_density(const Eigen::VectorXd& x, double tau,
                                       const Observation& obs) const {
    const auto w = effective_weights(obs);
    Eigen::VectorXd logp(static_cast<Eigen::Index>(comps_.size()));
    for (size_t k = 0; k < comps_.size(); ++k) {
        const auto& c = comps_[k];
        const double var = tau * tau * c.sigma * c.sigma + (1.0 - tau) * (1.0 - tau);
        logp(static_cast<Eigen::Index>(k)) =
            std::log(w[k]) + log_normal_density(x, tau * c.mean, var);
    }
    const double m = logp.maxCoeff();
    return m + std::log((logp.array() - m).exp().sum());
}

Eigen::VectorXd GmmPolicy::marginal_score(const Eigen::VectorXd& x, double tau,
                                          const Observation& obs) const {
    if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("marginal_score: tau outside [0,1]");
    const Eigen::VectorXd r = responsibilities(x, tau, obs);
    Eigen::VectorXd score = Eigen::VectorXd::Zero(x.size());
    for (size_t k = 0; k < comps_.size(); ++k) {
        const auto& c = comps_[k];
        const double var = tau * tau * c.sigma * c.sigma + (1.0 - tau) * (1.0 - tau);
        score += r(static_cast<Eigen::Index>(k)) / var * (tau * c.mean - x);
    }
    return score;
}

Eigen::VectorXd GmmPolicy::posterior_mean(const Eigen::VectorXd& x, double tau,
                                          const Observation& obs) const {
    const Eigen::VectorXd r = responsibilities(x, tau, obs);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(x.size());
    const double omt2 = (1.0 - tau) * (1.0 - tau);
    for (size_t k = 0; k < comps_.size(); ++k) {
        const auto& c = comps_[k];
        const double s2 = tau * tau * c.sigma * c.sigma + omt2;
        // Gaussian conjugacy: E_k[A1|x] = (mu_k (1-tau)^2 + tau sigma_k^2 x) / s2
        mean += r(static_cast<Eigen::Index>(k)) * ((omt2 * c.mean + tau * c.sigma * c.sigma * x) / s2);
    }
    return mean;
}

Eigen::VectorXd GmmPolicy::velocity(const Eigen::VectorXd& x, double tau,
                                    const Observation& obs) const {
    const double t = std::min(tau, kTauCeiling);
    return (posterior_mean(x, t, obs) - x) / (1.0 - t);
}

Eigen::VectorXd GmmPolicy::velocity_vjp(const Eigen::VectorXd& x, double tau, const Observation& obs,
                                        const Eigen::VectorXd& cotangent) const {
    const double t = std::min(tau, kTauCeiling);
    const Eigen::VectorXd r = responsibilities(x, t, obs);
    const double omt2 = (1.0 - t) * (1.0 - t);

    // E(x) = sum_k r_k(x) m_k(x);  J^T g = sum_k [ r_k (t s_k^2-frac) g + (m_k . g) grad r_k ]
    // with grad r_k = r_k (c_k - sum_j r_j c_j), c_k = (t mu_k - x)/s_k^2.
    std::vector<Eigen::VectorXd> c(comps_.size());
    Eigen::VectorXd cbar = Eigen::VectorXd::Zero(x.size());
    for (size_t k = 0; k < comps_.size(); ++k) {
        const double s2 = t * t * comps_[k].sigma * comps_[k].sigma + omt2;
        c[k] = (t * comps_[k].mean - x) / s2;
        cbar += r(static_cast<Eigen::Index>(k)) * c[k];
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(x.size());
    for (size_t k = 0; k < comps_.size(); ++k) {
        const double sig2 = comps_[k].sigma * comps_[k].sigma;
        const double s2 = t * t * sig2 + omt2;
        const Eigen::VectorXd m_k = (omt2 * comps_[k].mean + t * sig2 * x) / s2;
        const double rk = r(static_cast<Eigen::Index>(k));
        out += rk * (t * sig2 / s2) * cotangent;
        out += (m_k.dot(cotangent)) * rk * (c[k] - cbar);
    }
    // v = (E - x)/(1-t)  =>  (dv/dx)^T g = (dE/dx^T g - g)/(1-t)
    return (out - cotangent) / (1.0 - t);
}

Eigen::VectorXd GmmPolicy::sample_clean(Rng& rng, const Observation& obs) const {
    const auto w = effective_weights(obs);
    double u = rng.uniform();
    size_t k = 0;
    for (; k + 1 < w.size(); ++k) {
        if (u < w[k]) break;
        u -= w[k];
    }
    Eigen::VectorXd x(comps_[k].mean.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = comps_[k].mean(i) + comps_[k].sigma * rng.normal();
    return x;
}

// ---------------------------------------------------------------------------
// MlpPolicy

MlpPolicy::MlpPolicy(int horizon, int dim, int obs_embedding_size,
                     const std::vector<int>& hidden_sizes, uint64_t init_seed)
    : h_(horizon), d_(dim), obs_size_(obs_embedding_size) {
    if (h_ < 1 || d_ < 1) throw std::invalid_argument("MlpPolicy: H and D must be >= 1");
    std::vector<int> sizes;
    sizes.push_back(h_ * d_ + 1 + obs_size_);
    for (int s : hidden_sizes) {
        if (s < 1) throw std::invalid_argument("MlpPolicy: hidden size must be >= 1");
        sizes.push_back(s);
    }
    sizes.push_back(h_ * d_);

    Rng rng(init_seed);
    for (size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int in = sizes[l], out = sizes[l + 1];
        Eigen::MatrixXd w(out, in);
        const double scale = std::sqrt(1.0 / in);
        for (int i = 0; i < out; ++i)
            for (int j = 0; j < in; ++j) w(i, j) = scale * rng.normal();
        weights_.push_back(std::move(w));
        biases_.push_back(Eigen::VectorXd::Zero(out));
    }
}

std::vector<int> MlpPolicy::layer_sizes() const {
    std::vector<int> sizes;
    sizes.push_back(static_cast<int>(weights_.front().cols()));
    for (const auto& w : weights_) sizes.push_back(static_cast<int>(w.rows()));
    return sizes;
}

Eigen::VectorXd MlpPolicy::assemble_input(const Eigen::VectorXd& x, double tau,
                                          const Observation& obs) const {
    Eigen::VectorXd in(x.size() + 1 + obs_size_);
    in.head(x.size()) = x;
    in(x.size()) = tau;
    if (obs_size_ > 0) {
        // extra embedding entries are ignored so richer observations stay usable
        if (obs.embedding.size() < obs_size_)
            throw std::invalid_argument("MlpPolicy: observation embedding too short");
        in.tail(obs_size_) = obs.embedding.head(obs_size_);
    }
    return in;
}

void MlpPolicy::forward(const Eigen::VectorXd& input, std::vector<Eigen::VectorXd>& pre,
                        std::vector<Eigen::VectorXd>& post) const {
    pre.clear();
    post.clear();
    post.push_back(input);
    for (size_t l = 0; l < weights_.size(); ++l) {
        pre.push_back(weights_[l] * post.back() + biases_[l]);
        if (l + 1 < weights_.size())
            post.push_back(pre.back().array().tanh().matrix());
        else
            post.push_back(pre.back());  // linear output layer
    }
}

Eigen::VectorXd MlpPolicy::velocity(const Eigen::VectorXd& x, double tau,
                                    const Observation& obs) const {
    std::vector<Eigen::VectorXd> pre, post;
    forward(assemble_input(x, tau, obs), pre, post);
    return post.back();
}

Eigen::VectorXd MlpPolicy::velocity_vjp(const Eigen::VectorXd& x, double tau, const Observation& obs,
                                        const Eigen::VectorXd& cotangent) const {
    std::vector<Eigen::VectorXd> pre, post;
    forward(assemble_input(x, tau, obs), pre, post);
    Eigen::VectorXd delta = cotangent;
    for (size_t l = weights_.size(); l-- > 0;) {
        if (l + 1 < weights_.size())
            delta = delta.cwiseProduct((1.0 - pre[l].array().tanh().square()).matrix());
        delta = weights_[l].transpose() * delta;
    }
    return delta.head(x.size());  // discard tau/obs slots
}

double MlpPolicy::loss_and_param_grad(const Eigen::VectorXd& x, double tau, const Observation& obs,
                                      const Eigen::VectorXd& target,
                                      std::vector<Eigen::MatrixXd>& weight_grads,
                                      std::vector<Eigen::VectorXd>& bias_grads) const {
    std::vector<Eigen::VectorXd> pre, post;
    forward(assemble_input(x, tau, obs), pre, post);
    const Eigen::VectorXd resid = post.back() - target;
    Eigen::VectorXd delta = resid;
    for (size_t l = weights_.size(); l-- > 0;) {
        if (l + 1 < weights_.size())
            delta = delta.cwiseProduct((1.0 - pre[l].array().tanh().square()).matrix());
        weight_grads[l] += delta * post[l].transpose();
        bias_grads[l] += delta;
        if (l > 0) delta = weights_[l].transpose() * delta;
    }
    return 0.5 * resid.squaredNorm();
}

void MlpPolicy::sgd_step(const std::vector<Eigen::MatrixXd>& weight_grads,
                         const std::vector<Eigen::VectorXd>& bias_grads, double lr) {
    for (size_t l = 0; l < weights_.size(); ++l) {
        weights_[l] -= lr * weight_grads[l];
        biases_[l] -= lr * bias_grads[l];
    }
}

void MlpPolicy::set_parameters(std::vector<Eigen::MatrixXd> weights,
                               std::vector<Eigen::VectorXd> biases) {
    if (weights.size() != weights_.size() || biases.size() != biases_.size())
        throw std::invalid_argument("MlpPolicy::set_parameters: layer count mismatch");
    for (size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].rows() != weights_[l].rows() || weights[l].cols() != weights_[l].cols() ||
            biases[l].size() != biases_[l].size())
            throw std::invalid_argument("MlpPolicy::set_parameters: layer shape mismatch");
    }
    weights_ = std::move(weights);
    biases_ = std::move(biases);
}

MlpPolicy train_flow_policy(const std::vector<std::pair<Observation, ActionChunk>>& dataset,
                            const std::vector<int>& hidden_sizes, int epochs, double lr,
                            uint64_t seed, std::vector<TrainingRecord>* log) {
    if (dataset.empty()) throw std::invalid_argument("train_flow_policy: empty dataset");
    const int h = dataset.front().second.horizon();
    const int d = dataset.front().second.dim();
    const int obs_size = static_cast<int>(dataset.front().first.embedding.size());
    for (const auto& [obs, chunk] : dataset) {
        if (chunk.horizon() != h || chunk.dim() != d)
            throw std::invalid_argument("train_flow_policy: inconsistent chunk shapes");
        if (obs.embedding.size() != obs_size)
            throw std::invalid_argument("train_flow_policy: inconsistent embedding sizes");
    }

    MlpPolicy policy(h, d, obs_size, hidden_sizes, seed);
    Rng rng(seed ^ 0x5DEECE66Dull);

    std::vector<Eigen::MatrixXd> wg;
    std::vector<Eigen::VectorXd> bg;
    for (const auto& w : policy.weights()) wg.emplace_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    for (const auto& b : policy.biases()) bg.emplace_back(Eigen::VectorXd::Zero(b.size()));

    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (int epoch = 0; epoch < epochs; ++epoch) {
        // Fisher-Yates with the deterministic stream
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_int(static_cast<int>(i))]);

        double loss_sum = 0.0;
        for (size_t idx : order) {
            const auto& [obs, chunk] = dataset[idx];
            const Eigen::VectorXd a1 = chunk.flat();
            Eigen::VectorXd a0(a1.size());
            for (Eigen::Index i = 0; i < a0.size(); ++i) a0(i) = rng.normal();
            const double tau = rng.uniform();
            const Eigen::VectorXd a_tau = (1.0 - tau) * a0 + tau * a1;
            const Eigen::VectorXd target = a1 - a0;

            for (auto& g : wg) g.setZero();
            for (auto& g : bg) g.setZero();
            const double loss = policy.loss_and_param_grad(a_tau, tau, obs, target, wg, bg);
            if (!std::isfinite(loss))
                throw std::runtime_error("train_flow_policy: loss diverged (NaN) at epoch " +
                                         std::to_string(epoch));
            policy.sgd_step(wg, bg, lr);
            loss_sum += loss;
        }
        if (log) log->push_back({epoch, loss_sum / static_cast<double>(dataset.size())});
    }
    return policy;
}

// ---------------------------------------------------------------------------
// LatentDecoder

LatentDecoder::LatentDecoder(Eigen::MatrixXd w, Eigen::VectorXd b)
    : mode_(Mode::Affine), w_(std::move(w)), b_(std::move(b)) {
    if (b_.size() != w_.cols()) throw std::invalid_argument("LatentDecoder: offset size != action dim");
}

ActionChunk LatentDecoder::decode(const ActionChunk& latent) const {
    if (mode_ == Mode::Identity) return latent;
    if (latent.dim() != w_.rows())
        throw std::invalid_argument("LatentDecoder::decode: latent dim " + std::to_string(latent.dim()) +
                                    " != " + std::to_string(w_.rows()));
    ActionChunk out(latent.horizon(), static_cast<int>(w_.cols()));
    for (int i = 0; i < latent.horizon(); ++i)
        out.values.row(i) = (w_.transpose() * latent.values.row(i).transpose() + b_).transpose();
    return out;
}

Eigen::MatrixXd LatentDecoder::pullback(const Eigen::MatrixXd& grad_joint) const {
    if (mode_ == Mode::Identity) return grad_joint;
    if (grad_joint.cols() != w_.cols())
        throw std::invalid_argument("LatentDecoder::pullback: gradient dim mismatch");
    Eigen::MatrixXd out(grad_joint.rows(), w_.rows());
    for (Eigen::Index i = 0; i < grad_joint.rows(); ++i)
        out.row(i) = (w_ * grad_joint.row(i).transpose()).transpose();
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {
using nlohmann::json;

json vector_to_json(const Eigen::VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

Eigen::VectorXd vector_from_json(const json& arr) {
    Eigen::VectorXd v(arr.size());
    for (size_t i = 0; i < arr.size(); ++i) v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
    return v;
}
}  // namespace

void save_policy(const GmmPolicy& policy, const std::string& path) {
    json doc;
    doc["format_version"] = 1;
    doc["type"] = "gmm";
    doc["horizon"] = policy.horizon();
    doc["dim"] = policy.dim();
    json comps = json::array();
    for (const auto& c : policy.components())
        comps.push_back({{"weight", c.weight}, {"mean", vector_to_json(c.mean)}, {"sigma", c.sigma}});
    doc["components"] = comps;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_policy: cannot open " + path);
    out << doc.dump(2) << "\n";
}

void save_policy(const MlpPolicy& policy, const std::string& path) {
    json doc;
    doc["format_version"] = 1;
    doc["type"] = "mlp";
    doc["horizon"] = policy.horizon();
    doc["dim"] = policy.dim();
    doc["obs_embedding_size"] = policy.obs_embedding_size();
    json layers = json::array();
    for (size_t l = 0; l < policy.weights().size(); ++l) {
        const auto& w = policy.weights()[l];
        json rows = json::array();
        for (Eigen::Index i = 0; i < w.rows(); ++i) rows.push_back(vector_to_json(w.row(i).transpose()));
        layers.push_back({{"weight", rows}, {"bias", vector_to_json(policy.biases()[l])}});
    }
    doc["layers"] = layers;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_policy: cannot open " + path);
    out << doc.dump() << "\n";
}

std::unique_ptr<VelocityPolicy> load_policy(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_policy: cannot open " + path);
    json doc = json::parse(in);
    if (doc.at("format_version").get<int>() != 1)
        throw std::runtime_error("load_policy: unsupported format version");
    const std::string type = doc.at("type").get<std::string>();
    const int h = doc.at("horizon").get<int>();
    const int d = doc.at("dim").get<int>();
    if (type == "gmm") {
        std::vector<GmmPolicy::Component> comps;
        for (const auto& c : doc.at("components"))
            comps.push_back({c.at("weight").get<double>(), vector_from_json(c.at("mean")),
                             c.at("sigma").get<double>()});
        return std::make_unique<GmmPolicy>(h, d, std::move(comps));
    }
    if (type == "mlp") {
        const int obs_size = doc.at("obs_embedding_size").get<int>();
        const auto& layers = doc.at("layers");
        std::vector<int> hidden;
        for (size_t l = 0; l + 1 < layers.size(); ++l)
            hidden.push_back(static_cast<int>(layers[l].at("bias").size()));
        MlpPolicy policy(h, d, obs_size, hidden, 0);
        std::vector<Eigen::MatrixXd> ws;
        std::vector<Eigen::VectorXd> bs;
        for (const auto& layer : layers) {
            const auto& rows = layer.at("weight");
            Eigen::MatrixXd w(rows.size(), rows[0].size());
            for (size_t i = 0; i < rows.size(); ++i)
                w.row(static_cast<Eigen::Index>(i)) = vector_from_json(rows[i]).transpose();
            ws.push_back(std::move(w));
            bs.push_back(vector_from_json(layer.at("bias")));
        }
        policy.set_parameters(std::move(ws), std::move(bs));
        return std::make_unique<MlpPolicy>(std::move(policy));
    }
    throw std::runtime_error("load_policy: unknown policy type '" + type + "'");
}

void save_chunk_dataset(const std::vector<std::pair<Observation, ActionChunk>>& data,
                        const std::string& path) {
    if (data.empty()) throw std::invalid_argument("save_chunk_dataset: empty dataset");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_chunk_dataset: cannot open " + path);
    const int h = data.front().second.horizon(), d = data.front().second.dim();
    out << "obs_id";
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < d; ++j) out << ",a" << i << "_" << j;
    out << "\n";
    out.precision(17);
    for (const auto& [obs, chunk] : data) {
        out << obs.scene_id;
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < d; ++j) out << "," << chunk.values(i, j);
        out << "\n";
    }
}

std::vector<std::pair<Observation, ActionChunk>> load_chunk_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_chunk_dataset: cannot open " + path);
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("load_chunk_dataset: empty file");

    // Infer H and D from the last column name "a{H-1}_{D-1}".
    int h = 0, d = 0;
    {
        std::stringstream ss(header);
        std::string col;
        while (std::getline(ss, col, ',')) {
            if (col.size() > 1 && col[0] == 'a') {
                const auto us = col.find('_');
                if (us != std::string::npos) {
                    h = std::max(h, std::stoi(col.substr(1, us - 1)) + 1);
                    d = std::max(d, std::stoi(col.substr(us + 1)) + 1);
                }
            }
        }
    }
    if (h == 0 || d == 0) throw std::runtime_error("load_chunk_dataset: malformed header");

    std::vector<std::pair<Observation, ActionChunk>> data;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        Observation obs;
        obs.scene_id = std::stoi(cell);
        ActionChunk chunk(h, d);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < d; ++j) {
                if (!std::getline(ss, cell, ','))
                    throw std::runtime_error("load_chunk_dataset: truncated row");
                chunk.values(i, j) = std::stod(cell);
            }
        data.emplace_back(std::move(obs), std::move(chunk));
    }
    return data;
}

}  // namespace flowguide
