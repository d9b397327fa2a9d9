#include "flowguide/so3.hpp"

#include <cmath>

namespace flowguide::so3 {

namespace {
constexpr double kSmallAngle = 1e-6;
}

Mat3 hat(const Vec3& w) {
    Mat3 m;
    m << 0, -w.z(), w.y(),
         w.z(), 0, -w.x(),
        -w.y(), w.x(), 0;
    return m;
}

Mat3 exp_map(const Vec3& w) {
    const double theta2 = w.squaredNorm();
    const Mat3 K = hat(w);
    double a, b;  // R = I + a*K + b*K^2
    if (theta2 < kSmallAngle * kSmallAngle) {
        a = 1.0 - theta2 / 6.0;
        b = 0.5 - theta2 / 24.0;
    } else {
        const double theta = std::sqrt(theta2);
        a = std::sin(theta) / theta;
        b = (1.0 - std::cos(theta)) / theta2;
    }
    return Mat3::Identity() + a * K + b * (K * K);
}

Mat3 left_jacobian(const Vec3& w) {
    const double theta2 = w.squaredNorm();
    const Mat3 K = hat(w);
    double b, c;  // J_l = I + b*K + c*K^2
    if (theta2 < kSmallAngle * kSmallAngle) {
        b = 0.5 - theta2 / 24.0;
        c = 1.0 / 6.0 - theta2 / 120.0;
    } else {
        const double theta = std::sqrt(theta2);
        b = (1.0 - std::cos(theta)) / theta2;
        c = (theta - std::sin(theta)) / (theta2 * theta);
    }
    return Mat3::Identity() + b * K + c * (K * K);
}

Vec3 unskew_twice(const Mat3& m) {
    return Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
}

}  // namespace flowguide::so3
