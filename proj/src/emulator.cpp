#include "eivar/emulator.hpp"

#include <algorithm>

namespace eivar {

namespace {

constexpr double kScaleFloor = 1e-12;

}  // namespace

Dataset::Dataset(Matrix theta, Matrix eta) : params(std::move(theta)), outputs(std::move(eta)) {
    if (params.rows() != outputs.rows()) {
        throw DimensionMismatch("dataset: params and outputs differ in row count");
    }
    if (!outputs.allFinite()) throw DimensionMismatch("dataset: non-finite output");
}

void Dataset::append(const Vector& theta, const Vector& eta) {
    if (size() > 0 && (theta.size() != param_dim() || eta.size() != output_dim())) {
        throw DimensionMismatch("dataset: appended row has wrong dimension");
    }
    if (!eta.allFinite()) throw DimensionMismatch("dataset: non-finite output");
    const Index n = size();
    params.conservativeResize(n + 1, theta.size());
    outputs.conservativeResize(n + 1, eta.size());
    params.row(n) = theta.transpose();
    outputs.row(n) = eta.transpose();
}

bool Dataset::drop_pending(const Vector& theta) {
    const auto it = std::find_if(pending.begin(), pending.end(), [&](const Vector& v) {
        return v.size() == theta.size() && v == theta;
    });
    if (it == pending.end()) return false;
    pending.erase(it);
    return true;
}

Dataset Dataset::head(Index n) const {
    Dataset out(params.topRows(n), outputs.topRows(n));
    return out;
}

Matrix PcgpEmulator::loading() const { return scale.asDiagonal() * basis; }

std::vector<KernelParams> PcgpEmulator::params() const {
    std::vector<KernelParams> out;
    out.reserve(gps.size());
    for (const auto& g : gps) out.push_back(g.params);
    return out;
}

Vector PcgpEmulator::latent_of(const Vector& eta) const {
    Vector z = ((eta - center).array() / scale.array()).matrix();
    for (Index i = 0; i < z.size(); ++i) {
        if (scale(i) <= kScaleFloor) z(i) = 0.0;
    }
    return basis.transpose() * z;
}

Matrix EmulatorPrediction::covariance() const {
    return loading * latent_vars.asDiagonal() * loading.transpose();
}

PcgpEmulator emu_fit(const Dataset& data, const EmulatorFitOptions& options) {
    const Index n = data.size();
    const Index d = data.output_dim();
    if (n < 2) throw DimensionMismatch("emulator: need at least two evaluated points");
    if (d < 1) throw DimensionMismatch("emulator: output dimension must be positive");

    PcgpEmulator emu;
    emu.center = data.outputs.colwise().mean().transpose();
    const Matrix centered = data.outputs.rowwise() - emu.center.transpose();  // n x d
    emu.scale = (centered.colwise().squaredNorm().array() / static_cast<double>(n))
                    .sqrt()
                    .max(kScaleFloor)
                    .matrix()
                    .transpose();
    if ((emu.scale.array() <= kScaleFloor).all()) {
        throw DegenerateData("emulator: all simulation outputs are identical");
    }

    Matrix xi = (centered.array().rowwise() / emu.scale.transpose().array()).matrix().transpose();
    for (Index i = 0; i < d; ++i) {
        if (emu.scale(i) <= kScaleFloor) xi.row(i).setZero();
    }

    Eigen::JacobiSVD<Matrix> svd(xi, Eigen::ComputeFullU);
    const Vector sv = svd.singularValues();
    const Index cap = std::min(d, n);
    Index q = 1;
    if (options.q_policy.q) {
        q = std::clamp(*options.q_policy.q, Index{1}, cap);
    } else {
        const Vector energy = sv.array().square();
        const double total = energy.sum();
        double acc = 0.0;
        q = cap;
        for (Index j = 0; j < energy.size(); ++j) {
            acc += energy(j);
            if (acc >= options.q_policy.variance_fraction * total) {
                q = j + 1;
                break;
            }
        }
        q = std::clamp(q, Index{1}, cap);
    }

    emu.basis = svd.matrixU().leftCols(q);
    for (Index j = 0; j < q; ++j) {
        Index imax = 0;
        emu.basis.col(j).cwiseAbs().maxCoeff(&imax);
        if (emu.basis(imax, j) < 0.0) emu.basis.col(j) *= -1.0;
    }

    const Matrix scores = emu.basis.transpose() * xi;  // q x n
    emu.gps.reserve(static_cast<std::size_t>(q));
    for (Index j = 0; j < q; ++j) {
        GpFitOptions go;
        go.seed = derive_seed(options.seed, 0x6770, static_cast<std::uint64_t>(j));
        go.starts = options.starts;
        go.max_iterations = options.max_iterations;
        go.fixed = options.fixed;
        if (static_cast<std::size_t>(j) < options.init.size()) {
            go.init = options.init[static_cast<std::size_t>(j)];
        } else if (options.fixed) {
            throw Error("emulator: fixed fit is missing parameters for a component");
        }
        emu.gps.push_back(gp_fit(data.params, scores.row(j).transpose(), go));
    }
    return emu;
}

EmulatorPrediction emu_predict(const PcgpEmulator& emu, const Vector& query) {
    const EmulatorBatchPrediction b = emu_predict_batch(emu, query.transpose());
    return {b.mean.row(0).transpose(), b.latent_vars.row(0).transpose(), emu.loading()};
}

EmulatorBatchPrediction emu_predict_batch(const PcgpEmulator& emu, const Matrix& queries) {
    if (queries.cols() != emu.param_dim()) throw DimensionMismatch("emulator: query dimension");
    const Index m = queries.rows();
    Matrix latent_mean(m, emu.q());
    EmulatorBatchPrediction out;
    out.latent_vars.resize(m, emu.q());
    for (Index j = 0; j < emu.q(); ++j) {
        Vector mean, var;
        gp_predict_batch(emu.gps[static_cast<std::size_t>(j)], queries, mean, var);
        latent_mean.col(j) = mean;
        out.latent_vars.col(j) = var;
    }
    out.mean = (latent_mean * emu.loading().transpose()).rowwise() + emu.center.transpose();
    return out;
}

Matrix emu_fantasy(const PcgpEmulator& emu, const Vector& candidate, const Matrix& queries) {
    Matrix out(queries.rows(), emu.q());
    for (Index j = 0; j < emu.q(); ++j) {
        out.col(j) = gp_fantasy(emu.gps[static_cast<std::size_t>(j)], candidate, queries)
                         .cov_reduction;
    }
    return out;
}

Matrix emu_fantasy_phi(const PcgpEmulator& emu, const Vector& candidate, const Vector& query) {
    const Vector tau = emu_fantasy(emu, candidate, query.transpose()).row(0).transpose();
    const Matrix f = emu.loading();
    return f * tau.asDiagonal() * f.transpose();
}

PcgpEmulator emu_believe(const PcgpEmulator& emu, const Vector& new_param) {
    PcgpEmulator out = emu;
    for (std::size_t j = 0; j < emu.gps.size(); ++j) {
        const double m = gp_predict(emu.gps[j], new_param).mean;
        out.gps[j] = gp_extend(emu.gps[j], new_param, m);
    }
    return out;
}

PcgpEmulator emu_liar(const PcgpEmulator& emu, const Vector& new_param, const Vector& lie) {
    if (lie.size() != emu.output_dim()) throw DimensionMismatch("emulator: lie dimension");
    const Vector w = emu.latent_of(lie);
    PcgpEmulator out = emu;
    for (std::size_t j = 0; j < emu.gps.size(); ++j) {
        out.gps[j] = gp_extend(emu.gps[j], new_param, w(static_cast<Index>(j)));
    }
    return out;
}

}  // namespace eivar
