#include "ncs/control.hpp"

#include <cmath>
#include <sstream>

#include "ncs/rng.hpp"

namespace ncs {

namespace {

constexpr double kSymmetryTol = 1e-10;

bool is_symmetric(const Matrix& M) {
    return M.rows() == M.cols() && (M - M.transpose()).cwiseAbs().maxCoeff() <= kSymmetryTol * (1.0 + M.cwiseAbs().maxCoeff());
}

double min_eigenvalue(const Matrix& M) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(M, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

void require(bool cond, const std::string& what) {
    if (!cond) throw ConfigError(what);
}

// Symmetric square root of a PSD covariance.
Matrix covariance_factor(const Matrix& Sigma) {
    require(Sigma.rows() == Sigma.cols() && Sigma.rows() > 0, "noise covariance must be square");
    require(is_symmetric(Sigma), "noise covariance must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(Sigma);
    const Vector& values = solver.eigenvalues();
    const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
    require(values.minCoeff() >= -1e-12 * scale, "noise covariance must be positive semi-definite");
    const Vector roots = values.cwiseMax(0.0).cwiseSqrt();
    return solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();
}

}  // namespace

void SystemMatrices::validate() const {
    const auto n = A.rows();
    const auto m = B.cols();
    require(n > 0 && A.cols() == n, "A must be square and non-empty");
    require(B.rows() == n && m > 0, "B must have as many rows as A");
    require(Sigma.rows() == n && Sigma.cols() == n, "Sigma must be n x n");
    require(Q.rows() == n && Q.cols() == n, "Q must be n x n");
    require(R.rows() == m && R.cols() == m, "R must be m x m");
    require(A.allFinite() && B.allFinite() && Sigma.allFinite() && Q.allFinite() && R.allFinite(),
            "system matrices must be finite");
    require(is_symmetric(Q) && min_eigenvalue(Q) >= -1e-12, "Q must be symmetric positive semi-definite");
    require(is_symmetric(R) && min_eigenvalue(R) > 0.0, "R must be symmetric positive definite");
    require(is_symmetric(Sigma) && min_eigenvalue(Sigma) >= -1e-12,
            "Sigma must be symmetric positive semi-definite");
}

SystemMatrices SystemMatrices::scalar(double a, double b, double sigma, double q, double r) {
    auto one = [](double v) { return Matrix::Constant(1, 1, v); };
    return SystemMatrices{one(a), one(b), one(sigma), one(q), one(r)};
}

PlantState step_plant(const PlantState& state, const Vector& u, const Vector& w, const SystemMatrices& sys) {
    require(state.x.size() == sys.state_dim() && w.size() == sys.state_dim() && u.size() == sys.input_dim(),
            "step_plant: dimension mismatch");
    return PlantState{sys.A * state.x + sys.B * u + w, state.k + 1};
}

Vector sample_noise(RngStream& rng, const Matrix& Sigma) {
    return NoiseSampler(Sigma)(rng);
}

NoiseSampler::NoiseSampler(const Matrix& Sigma) : factor_(covariance_factor(Sigma)) {}

Vector NoiseSampler::operator()(RngStream& rng) const {
    Vector z(factor_.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.standard_normal();
    return factor_ * z;
}

namespace {

Matrix riccati_map(const SystemMatrices& sys, const Matrix& P) {
    const Matrix BtPA = sys.B.transpose() * P * sys.A;
    const Matrix S = sys.R + sys.B.transpose() * P * sys.B;
    return sys.A.transpose() * P * sys.A - BtPA.transpose() * S.ldlt().solve(BtPA) + sys.Q;
}

}  // namespace

double riccati_residual(const SystemMatrices& sys, const Matrix& P) {
    return (P - riccati_map(sys, P)).cwiseAbs().maxCoeff();
}

double spectral_radius(const Matrix& M) {
    Eigen::EigenSolver<Matrix> solver(M, false);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

Gain solve_dare(const SystemMatrices& sys, double tol, long max_iter, const std::string& label) {
    sys.validate();
    if (!(tol > 0.0)) throw ConfigError("solve_dare: tolerance must be positive");

    Matrix P = sys.Q;
    for (long it = 1; it <= max_iter; ++it) {
        Matrix next = riccati_map(sys, P);
        next = 0.5 * (next + next.transpose());
        const double change = (next - P).cwiseAbs().maxCoeff();
        P = std::move(next);
        if (!P.allFinite()) break;
        if (change <= tol) {
            const Matrix BtPA = sys.B.transpose() * P * sys.A;
            const Matrix S = sys.R + sys.B.transpose() * P * sys.B;
            Gain gain{S.ldlt().solve(BtPA), P, static_cast<int>(it), 0.0};
            gain.residual = riccati_residual(sys, P);
            return gain;
        }
    }
    std::ostringstream msg;
    msg << "solve_dare: Riccati iteration did not converge for " << label << " within " << max_iter
        << " iterations";
    throw SolverError(msg.str());
}

Vector control_input(const Vector& x_hat, const Gain& gain) {
    require(x_hat.size() == gain.L.cols(), "control_input: dimension mismatch");
    return -gain.L * x_hat;
}

double stage_cost(const Vector& x, const Vector& u, const SystemMatrices& sys) {
    require(x.size() == sys.state_dim() && u.size() == sys.input_dim(), "stage_cost: dimension mismatch");
    return x.dot(sys.Q * x) + u.dot(sys.R * u);
}

Vector estimate_state(const EstimatorState& est, Step k, const SystemMatrices& sys) {
    const Step age = k - est.last_nu;
    if (age < 0) throw std::logic_error("estimate_state: negative age");
    if (static_cast<Step>(est.input_history.size()) < k)
        throw std::logic_error("estimate_state: input history does not cover [nu, k-1]");

    const auto n = sys.state_dim();
    Vector x_hat = Vector::Zero(n);
    Matrix A_pow = Matrix::Identity(n, n);  // A^(q-1)
    for (Step q = 1; q <= age; ++q) {
        x_hat += A_pow * sys.B * est.input_history[static_cast<std::size_t>(k - q)];
        A_pow = A_pow * sys.A;
    }
    x_hat += A_pow * est.last_state;
    return x_hat;
}

RemoteEstimator::RemoteEstimator(const SystemMatrices& sys, std::size_t horizon_hint)
    : A_(sys.A), B_(sys.B), last_state_(Vector::Zero(sys.state_dim())), x_hat_(Vector::Zero(sys.state_dim())) {
    inputs_.reserve(horizon_hint);
}

bool RemoteEstimator::apply_update(const Vector& x_nu, Step nu) {
    if (received_ && nu <= nu_) return false;
    if (nu > current_step() || nu < 0) throw std::logic_error("RemoteEstimator: update from the future");
    received_ = true;
    nu_ = nu;
    last_state_ = x_nu;
    x_hat_ = x_nu;
    for (Step j = nu; j < current_step(); ++j) x_hat_ = A_ * x_hat_ + B_ * inputs_[static_cast<std::size_t>(j)];
    return true;
}

void RemoteEstimator::record_input(const Vector& u) {
    inputs_.push_back(u);
    x_hat_ = A_ * x_hat_ + B_ * u;
}

EstimatorState RemoteEstimator::snapshot() const {
    return EstimatorState{last_state_, nu_, inputs_};
}

}  // namespace ncs
