#include "modforge/probe.hpp"

#include <algorithm>
#include <cstdio>
#include <tuple>

#include <Eigen/Dense>

namespace modforge {

namespace {
using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const MatrixRM>;
}  // namespace

void fit_linear_probe(std::span<const double> Z, std::size_t n, std::size_t D,
                      std::span<const double> targets, std::size_t K, double lambda,
                      std::vector<double>& W, std::vector<double>& b) {
    if (n == 0 || D == 0 || K == 0) throw UsageError("fit_linear_probe: empty problem");
    if (Z.size() != n * D || targets.size() != n * K)
        throw DimensionError("fit_linear_probe: array sizes do not match n/D/K");
    if (lambda < 0.0) throw ConfigError("probe lambda must be non-negative");
    if (n <= D)
        std::fputs("warning: linear probe fit with n_fit <= D; expect an ill-conditioned fit\n",
                   stderr);

    ConstMap Zm(Z.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(D));
    ConstMap Tm(targets.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(K));

    const Eigen::RowVectorXd z_mean = Zm.colwise().mean();
    const Eigen::RowVectorXd t_mean = Tm.colwise().mean();
    const MatrixRM Zc = Zm.rowwise() - z_mean;
    const MatrixRM Tc = Tm.rowwise() - t_mean;

    // Normal equations of the centered problem: (ZcᵀZc + nλI) Wᵀ = ZcᵀTc.
    // The intercept is unpenalized, so b = t̄ − W z̄ after solving.
    Eigen::MatrixXd A = Zc.transpose() * Zc;
    A.diagonal().array() += static_cast<double>(n) * lambda;
    const Eigen::MatrixXd rhs = Zc.transpose() * Tc;

    Eigen::MatrixXd Wt;  // [D x K]
    if (lambda > 0.0) {
        Wt = Eigen::LLT<Eigen::MatrixXd>(A).solve(rhs);
    } else {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
        if (!lu.isInvertible())
            throw NumericError("probe system is singular with lambda = 0; use lambda > 0");
        Wt = lu.solve(rhs);
    }
    if (!Wt.allFinite()) throw NumericError("probe solve produced non-finite coefficients");

    W.resize(K * D);
    for (std::size_t r = 0; r < K; ++r)
        for (std::size_t c = 0; c < D; ++c)
            W[r * D + c] = Wt(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r));
    const Eigen::RowVectorXd bias = t_mean - z_mean * Wt;
    b.assign(bias.data(), bias.data() + K);
}

std::pair<double, double> competition_strength(const std::vector<double>& W,
                                               const std::vector<double>& b,
                                               std::span<const double> Z_eval, std::size_t n_eval,
                                               std::size_t D, std::span<const double> targets_eval,
                                               std::size_t K) {
    if (W.size() != K * D || b.size() != K)
        throw DimensionError("competition_strength: W/b sizes do not match D/K");
    if (Z_eval.size() != n_eval * D || targets_eval.size() != n_eval * K)
        throw DimensionError("competition_strength: eval array sizes do not match n/D/K");
    if (n_eval == 0) throw UsageError("competition_strength: empty eval set");

    ConstMap Zm(Z_eval.data(), static_cast<Eigen::Index>(n_eval), static_cast<Eigen::Index>(D));
    ConstMap Tm(targets_eval.data(), static_cast<Eigen::Index>(n_eval),
                static_cast<Eigen::Index>(K));
    ConstMap Wm(W.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(D));
    const Eigen::Map<const Eigen::RowVectorXd> bm(b.data(), static_cast<Eigen::Index>(K));

    const MatrixRM pred = (Zm * Wm.transpose()).rowwise() + bm;
    const double resid = (Tm - pred).squaredNorm();
    const Eigen::RowVectorXd t_mean = Tm.colwise().mean();
    const double total = (Tm.rowwise() - t_mean).squaredNorm();
    if (total <= 0.0)
        throw NumericError("competition_strength: eval targets have zero variance");

    const double d_raw = resid / total;
    return {d_raw, std::clamp(d_raw, 0.0, 1.0)};
}

std::vector<ProbeResult> probe_pipeline(const MultiModalModel& model,
                                        const std::vector<ConceptModel>& concepts,
                                        const Dataset& ds, const Splits& splits, double lambda) {
    if (splits.probe_fit.empty() || splits.probe_eval.empty())
        throw UsageError("probe_pipeline: probe splits are empty");

    auto latents = [&](const std::vector<std::size_t>& idx) {
        Tensor z = model.latent_features(gather_all_features(ds, idx));
        auto v = z.values();
        return std::vector<double>(v.begin(), v.end());
    };
    const std::vector<double> Z_fit = latents(splits.probe_fit);
    const std::vector<double> Z_eval = latents(splits.probe_eval);
    const std::size_t D = model.latent_dim();
    const std::size_t K = model.num_classes();

    std::vector<ProbeResult> results;
    for (const ConceptModel& c : concepts) {
        const std::size_t mi = ds.modality_index(c.modality);
        auto targets = [&](const std::vector<std::size_t>& idx) {
            Tensor t = concept_predict(c, gather_features(ds, mi, idx));
            auto v = t.values();
            return std::vector<double>(v.begin(), v.end());
        };
        const std::vector<double> T_fit = targets(splits.probe_fit);
        const std::vector<double> T_eval = targets(splits.probe_eval);

        ProbeResult res;
        res.modality = c.modality;
        res.lambda = lambda;
        res.n_fit = splits.probe_fit.size();
        res.n_eval = splits.probe_eval.size();
        fit_linear_probe(Z_fit, res.n_fit, D, T_fit, K, lambda, res.W, res.b);
        std::tie(res.d_raw, res.d) =
            competition_strength(res.W, res.b, Z_eval, res.n_eval, D, T_eval, K);
        results.push_back(std::move(res));
    }
    return results;
}

}  // namespace modforge
