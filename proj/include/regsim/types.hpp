#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

namespace regsim {

using Matrix  = Eigen::MatrixXd;
using Vector  = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

}  // namespace regsim
