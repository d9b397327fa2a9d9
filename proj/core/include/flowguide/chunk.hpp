#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace flowguide {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// A fixed-horizon block of actions, one row per step. This is the object
/// being denoised; noisy intermediates and clean samples share the type.
struct ActionChunk {
    Eigen::MatrixXd values;  // H x D

    ActionChunk() = default;
    ActionChunk(int horizon, int dim) : values(Eigen::MatrixXd::Zero(horizon, dim)) {
        if (horizon < 1 || dim < 1) throw std::invalid_argument("ActionChunk: H and D must be >= 1");
    }
    explicit ActionChunk(Eigen::MatrixXd v) : values(std::move(v)) {}

    int horizon() const { return static_cast<int>(values.rows()); }
    int dim() const { return static_cast<int>(values.cols()); }

    bool all_finite() const { return values.allFinite(); }

    /// Row-major flattening (step-major), the layout policies operate on.
    Eigen::VectorXd flat() const {
        Eigen::VectorXd out(values.size());
        for (int i = 0; i < values.rows(); ++i)
            out.segment(i * values.cols(), values.cols()) = values.row(i).transpose();
        return out;
    }

    static ActionChunk from_flat(const Eigen::VectorXd& v, int horizon, int dim) {
        if (v.size() != static_cast<Eigen::Index>(horizon) * dim)
            throw std::invalid_argument("ActionChunk::from_flat: size mismatch");
        ActionChunk c(horizon, dim);
        for (int i = 0; i < horizon; ++i)
            c.values.row(i) = v.segment(i * dim, dim).transpose();
        return c;
    }

    void require_finite(const std::string& what) const {
        if (!all_finite()) throw std::runtime_error(what + ": non-finite action chunk");
    }
};

/// Denoising time in [0,1] plus the step size taken from it. tau=0 is noise.
struct FlowTime {
    double tau = 0.0;
    double delta = 0.0;

    FlowTime(double t, double d) : tau(t), delta(d) {
        if (t < 0.0 || t > 1.0) throw std::invalid_argument("FlowTime: tau outside [0,1]");
        if (d <= 0.0) throw std::invalid_argument("FlowTime: delta must be positive");
        if (t + d > 1.0 + 1e-9) throw std::invalid_argument("FlowTime: tau + delta exceeds 1");
    }
};

inline void require_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                                    std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
}

}  // namespace flowguide
