#ifndef EIVAR_EMULATOR_HPP
#define EIVAR_EMULATOR_HPP

#include "eivar/common.hpp"
#include "eivar/gp.hpp"

#include <optional>
#include <vector>

namespace eivar {

/// Evaluated simulation records plus the parameters still awaiting evaluation.
struct Dataset {
    Matrix params;   // n x p
    Matrix outputs;  // n x d
    std::vector<Vector> pending;

    Dataset() = default;
    Dataset(Matrix theta, Matrix eta);

    [[nodiscard]] Index size() const { return params.rows(); }
    [[nodiscard]] Index param_dim() const { return params.cols(); }
    [[nodiscard]] Index output_dim() const { return outputs.cols(); }
    void append(const Vector& theta, const Vector& eta);
    /// Removes the first pending entry equal to theta; returns false if absent.
    bool drop_pending(const Vector& theta);
    [[nodiscard]] Dataset head(Index n) const;
};

struct QPolicy {
    std::optional<Index> q;
    double variance_fraction = 0.995;
};

struct EmulatorFitOptions {
    QPolicy q_policy;
    std::uint64_t seed = 0;
    std::vector<KernelParams> init;  // warm starts, or exact parameters when fixed
    bool fixed = false;
    int starts = 4;
    int max_iterations = 200;
};

/// Principal-component GP emulator of a vector-valued simulator.
struct PcgpEmulator {
    Vector center;  // h
    Vector scale;   // s
    Matrix basis;   // B, d x q with orthonormal columns
    std::vector<GpState> gps;

    [[nodiscard]] Index q() const { return basis.cols(); }
    [[nodiscard]] Index output_dim() const { return basis.rows(); }
    [[nodiscard]] Index param_dim() const { return gps.front().dim(); }
    [[nodiscard]] Index size() const { return gps.front().size(); }
    /// G * B, the map from latent coordinates to output space.
    [[nodiscard]] Matrix loading() const;
    [[nodiscard]] std::vector<KernelParams> params() const;
    /// Latent coordinates B^T G^{-1} (eta - h) of an output vector.
    [[nodiscard]] Vector latent_of(const Vector& eta) const;
};

struct EmulatorPrediction {
    Vector mean;         // mu(theta), length d
    Vector latent_vars;  // diagonal of C(theta), length q
    Matrix loading;      // G * B

    /// S(theta) = G B C(theta) B^T G.
    [[nodiscard]] Matrix covariance() const;
};

struct EmulatorBatchPrediction {
    Matrix mean;         // m x d
    Matrix latent_vars;  // m x q
};

[[nodiscard]] PcgpEmulator emu_fit(const Dataset& data, const EmulatorFitOptions& options = {});

[[nodiscard]] EmulatorPrediction emu_predict(const PcgpEmulator& emu, const Vector& query);

[[nodiscard]] EmulatorBatchPrediction emu_predict_batch(const PcgpEmulator& emu,
                                                        const Matrix& queries);

/// Latent reductions tau^2_j(theta, candidate), one row per query, one column per component.
[[nodiscard]] Matrix emu_fantasy(const PcgpEmulator& emu, const Vector& candidate,
                                 const Matrix& queries);

/// phi(theta, candidate) = G B diag(tau^2) B^T G at a single query.
[[nodiscard]] Matrix emu_fantasy_phi(const PcgpEmulator& emu, const Vector& candidate,
                                     const Vector& query);

/// Appends (theta, mu(theta)) with every fitted quantity frozen.
[[nodiscard]] PcgpEmulator emu_believe(const PcgpEmulator& emu, const Vector& new_param);

/// Appends (theta, lie) with every fitted quantity frozen.
[[nodiscard]] PcgpEmulator emu_liar(const PcgpEmulator& emu, const Vector& new_param,
                                    const Vector& lie);

}  // namespace eivar

#endif
