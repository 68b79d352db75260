#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ncs {

class RngStream;

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Sampling-step index k.
using Step = std::int64_t;

// Raised for inconsistent or invalid model parameters.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when the Riccati iteration fails to settle.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Per-loop LTI plant and quadratic cost weights.
struct SystemMatrices {
    Matrix A;      // n x n
    Matrix B;      // n x m
    Matrix Sigma;  // n x n, process noise covariance
    Matrix Q;      // n x n
    Matrix R;      // m x m

    [[nodiscard]] Eigen::Index state_dim() const { return A.rows(); }
    [[nodiscard]] Eigen::Index input_dim() const { return B.cols(); }

    // Checks dimensions, symmetry and definiteness. Throws ConfigError.
    void validate() const;

    // Scalar plant x' = a x + b u + w with cost q x^2 + r u^2.
    static SystemMatrices scalar(double a, double b = 1.0, double sigma = 1.0, double q = 100.0,
                                 double r = 1.0);
};

struct Gain {
    Matrix L;  // m x n
    Matrix P;  // n x n
    int iterations = 0;
    double residual = 0.0;
};

struct PlantState {
    Vector x;
    Step k = 0;
};

// x' = A x + B u + w, k' = k + 1.
[[nodiscard]] PlantState step_plant(const PlantState& state, const Vector& u, const Vector& w,
                                    const SystemMatrices& sys);

// Zero-mean Gaussian with covariance Sigma. Throws ConfigError if Sigma is not PSD.
[[nodiscard]] Vector sample_noise(RngStream& rng, const Matrix& Sigma);

// Precomputes the square-root factor of Sigma once per loop.
class NoiseSampler {
public:
    explicit NoiseSampler(const Matrix& Sigma);
    [[nodiscard]] Vector operator()(RngStream& rng) const;
    [[nodiscard]] const Matrix& factor() const { return factor_; }

private:
    Matrix factor_;
};

// Value iteration P <- A'PA - A'PB (R + B'PB)^-1 B'PA + Q from P = Q until the
// step change is <= tol. L = (R + B'PB)^-1 B'PA.
[[nodiscard]] Gain solve_dare(const SystemMatrices& sys, double tol = 1e-10,
                              long max_iter = 1'000'000, const std::string& label = "loop");

[[nodiscard]] double riccati_residual(const SystemMatrices& sys, const Matrix& P);
[[nodiscard]] double spectral_radius(const Matrix& M);

// u = -L x_hat
[[nodiscard]] Vector control_input(const Vector& x_hat, const Gain& gain);

// x'Qx + u'Ru
[[nodiscard]] double stage_cost(const Vector& x, const Vector& u, const SystemMatrices& sys);

// Snapshot of what the controller knows: the freshest received state, its
// generation step and the inputs applied since the start of the run.
struct EstimatorState {
    Vector last_state;
    Step last_nu = 0;
    std::vector<Vector> input_history;  // input_history[j] = u[j]
};

// Closed form x_hat[k] = A^D x[nu] + sum_{q=1..D} A^(q-1) B u[k-q], D = k - nu.
[[nodiscard]] Vector estimate_state(const EstimatorState& est, Step k, const SystemMatrices& sys);

// Incremental remote estimator. The estimate always refers to step
// `current_step()`; recording the input for that step advances it by one.
class RemoteEstimator {
public:
    RemoteEstimator(const SystemMatrices& sys, std::size_t horizon_hint = 0);

    // Resets to x[nu] and replays inputs u[nu..current_step-1]. Ignored if nu is
    // not fresher than what is already held.
    bool apply_update(const Vector& x_nu, Step nu);

    // Stores u[current_step] and propagates x_hat one step.
    void record_input(const Vector& u);

    [[nodiscard]] const Vector& estimate() const { return x_hat_; }
    [[nodiscard]] Step current_step() const { return static_cast<Step>(inputs_.size()); }
    [[nodiscard]] Step last_nu() const { return nu_; }
    [[nodiscard]] Step age() const { return current_step() - nu_; }
    [[nodiscard]] bool has_update() const { return received_; }
    [[nodiscard]] EstimatorState snapshot() const;

private:
    Matrix A_;
    Matrix B_;
    Vector last_state_;
    Step nu_ = 0;
    bool received_ = false;
    std::vector<Vector> inputs_;
    Vector x_hat_;
};

}  // namespace ncs
