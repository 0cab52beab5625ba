#pragma once

// The six classifiers: {BELM, NLELM, KELM} output-weight initializations,
// each refined by the sparse multinomial-logistic solver, with or without
// weighted composite (spatial) features.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smlelm/data_model.hpp"
#include "smlelm/elm_core.hpp"
#include "smlelm/error.hpp"
#include "smlelm/kernels.hpp"
#include "smlelm/metrics.hpp"
#include "smlelm/rng.hpp"
#include "smlelm/smle_solver.hpp"
#include "smlelm/wcf.hpp"

namespace smlelm {

enum class Variant { belm, nlelm, kelm };

/// Which published parameter set the defaults follow.
enum class DatasetProfile { indian_pines, pavia };

struct ClassifierSpec {
    Variant variant = Variant::belm;
    bool wcf = false;
    Index hidden = 450; ///< L; unused by the kernel variant
    double c = 32.0;    ///< ridge / kernel regularization, unused by BELM
    double sigma_w = 1.0;
    double sigma_s = 1.0;
    SolverConfig solver;
    WcfConfig wcf_cfg;
    std::uint64_t seed = 0;

    bool uses_hidden_layer() const { return variant != Variant::kelm; }
};

inline std::string variant_name(Variant v, bool wcf)
{
    std::string base = v == Variant::belm ? "asml_belm" : v == Variant::nlelm ? "asml_nlelm" : "asml_kelm";
    return wcf ? base + "_wcf" : base;
}

struct VariantTag {
    Variant variant;
    bool wcf;
};

inline VariantTag parse_variant(const std::string& name)
{
    for (Variant v : {Variant::belm, Variant::nlelm, Variant::kelm})
        for (bool w : {false, true})
            if (variant_name(v, w) == name)
                return {v, w};
    throw ContractError("unknown variant '" + name + "' (expected asml_belm, asml_nlelm, asml_kelm, optionally with "
                        "the _wcf suffix)");
}

/// Published defaults: lambda = 2^a with a = -20 for the spatial variants,
/// -10 for spectral BELM/NLELM and -17 / -13 for spectral KELM; L = 450 /
/// 1000 on Indian Pines and 1100 on Pavia; window 13; mu = 0.1.
inline ClassifierSpec default_spec(Variant v, bool wcf, DatasetProfile profile = DatasetProfile::indian_pines)
{
    ClassifierSpec s;
    s.variant = v;
    s.wcf = wcf;
    int a = -10;
    if (wcf)
        a = -20;
    else if (v == Variant::kelm)
        a = profile == DatasetProfile::indian_pines ? -17 : -13;
    s.solver.lambda = std::ldexp(1.0, a);
    if (profile == DatasetProfile::pavia)
        s.hidden = 1100;
    else
        s.hidden = v == Variant::nlelm ? 1000 : 450;
    s.wcf_cfg.window = 13;
    s.wcf_cfg.mu = 0.1;
    s.wcf_cfg.rule = v == Variant::belm ? CombineRule::linear : CombineRule::sqrt;
    return s;
}

struct TrainedModel {
    ClassifierSpec spec;
    int classes = 0;
    Index bands = 0;
    std::optional<HiddenLayer> hidden;
    MatrixXd train_spectral; ///< kernel variant: training spectra, d x N
    MatrixXd train_spatial;  ///< kernel variant with WCF: training spatial features
    MatrixXd coefficients;   ///< R x M
    MinMax scaling;          ///< applied to raw cubes before any feature is built
};

struct TrainResult {
    TrainedModel model;
    MatrixXd initial; ///< closed-form ELM coefficients the solver started from
    FitResult fit;
};

namespace detail {

inline MatrixXd spatial_features(const ClassifierSpec& spec, const SampleSet& set, const HsiCube* cube)
{
    if (!cube)
        throw ContractError(variant_name(spec.variant, spec.wcf) + " needs the image cube for spatial features");
    if (cube->bands() != set.dim())
        throw ContractError("cube band count does not match the sample dimension");
    return spatial_mean(*cube, set.coords, spec.wcf_cfg);
}

/// Design matrix of the query samples (columns) under a trained model.
inline MatrixXd design(const TrainedModel& m, const SampleSet& set, const HsiCube* cube)
{
    const auto& spec = m.spec;
    if (spec.uses_hidden_layer()) {
        MatrixXd h = hidden_map(*m.hidden, set.features);
        if (spec.wcf)
            h = combine_hidden(h, hidden_map(*m.hidden, spatial_features(spec, set, cube)), spec.wcf_cfg);
        return h;
    }
    if (spec.wcf)
        return wcf_kernel(m.train_spectral, m.train_spatial, set.features, spatial_features(spec, set, cube),
                          spec.sigma_w, spec.sigma_s, spec.wcf_cfg.mu)
            .k;
    return gaussian_gram(m.train_spectral, set.features, spec.sigma_w).k;
}

inline int require_all_classes(const std::vector<int>& labels)
{
    if (labels.empty())
        throw ContractError("training set is empty");
    const int m = *std::max_element(labels.begin(), labels.end());
    if (*std::min_element(labels.begin(), labels.end()) < 1)
        throw ContractError("training labels must be >= 1");
    std::vector<bool> seen(static_cast<std::size_t>(m), false);
    for (int l : labels)
        seen[static_cast<std::size_t>(l - 1)] = true;
    for (int k = 0; k < m; ++k)
        if (!seen[static_cast<std::size_t>(k)])
            throw ContractError("training set has no sample of class " + std::to_string(k + 1));
    return m;
}

} // namespace detail

/// Random hidden layer (BELM/NLELM), spectral or composite design matrix,
/// closed-form initialization, then the sparse logistic refinement.
inline TrainResult train(const ClassifierSpec& spec, const SampleSet& train_set, const HsiCube* cube = nullptr,
                         MinMax scaling = {})
{
    spec.solver.validate();
    if (spec.wcf)
        spec.wcf_cfg.validate();
    if (train_set.labels.size() != static_cast<std::size_t>(train_set.size()))
        throw ContractError("training set: label count does not match sample count");
    const int classes = detail::require_all_classes(train_set.labels);
    const MatrixXd y = one_hot(train_set.labels, classes);

    TrainResult out;
    TrainedModel& m = out.model;
    m.spec = spec;
    m.classes = classes;
    m.bands = train_set.dim();
    m.scaling = scaling;

    MatrixXd phi;
    if (spec.uses_hidden_layer()) {
        if (spec.hidden < 1)
            throw ContractError("hidden layer size must be >= 1");
        m.hidden = init_hidden(derive_seed(spec.seed, "hidden"), spec.hidden, train_set.dim());
        phi = detail::design(m, train_set, cube);
        out.initial = spec.variant == Variant::belm ? solve_belm(phi, y) : solve_nlelm(phi, y, spec.c);
    } else {
        m.train_spectral = train_set.features;
        if (spec.wcf) {
            m.train_spatial = detail::spatial_features(spec, train_set, cube);
            phi = wcf_kernel(m.train_spectral, m.train_spatial, spec.sigma_w, spec.sigma_s, spec.wcf_cfg.mu).k;
        } else {
            phi = gaussian_gram(m.train_spectral, spec.sigma_w).k;
        }
        out.initial = solve_kelm(phi, y, spec.c);
    }
    out.fit = fit(out.initial, phi, y, spec.solver);
    m.coefficients = out.fit.beta;
    return out;
}

struct Prediction {
    std::vector<int> labels; ///< 1..M
    MatrixXd probs;          ///< M x n
};

/// Argmax of each column, ties to the smallest class index.
inline std::vector<int> argmax_labels(const MatrixXd& probs)
{
    std::vector<int> labels(static_cast<std::size_t>(probs.cols()));
    for (Index i = 0; i < probs.cols(); ++i) {
        Index best = 0;
        for (Index k = 1; k < probs.rows(); ++k)
            if (probs(k, i) > probs(best, i))
                best = k;
        labels[static_cast<std::size_t>(i)] = static_cast<int>(best) + 1;
    }
    return labels;
}

inline Prediction predict(const TrainedModel& model, const SampleSet& query, const HsiCube* cube = nullptr)
{
    if (query.dim() != model.bands)
        throw ContractError("predict: query has " + std::to_string(query.dim()) + " features, model expects "
                            + std::to_string(model.bands));
    Prediction p;
    p.probs = softmax_probs(model.coefficients, detail::design(model, query, cube));
    p.labels = argmax_labels(p.probs);
    return p;
}

/// Labels for every pixel of the (scaled) cube, row-major.
inline std::vector<int> predict_scene(const TrainedModel& model, const HsiCube& cube)
{
    const SampleSet all = flatten_all(cube);
    std::vector<int> labels;
    labels.reserve(static_cast<std::size_t>(all.size()));
    const Index chunk = 4096;
    for (Index start = 0; start < all.size(); start += chunk) {
        const Index n = std::min(chunk, all.size() - start);
        SampleSet part;
        part.features = all.features.middleCols(start, n);
        part.coords.assign(all.coords.begin() + start, all.coords.begin() + start + n);
        part.labels.assign(static_cast<std::size_t>(n), 0);
        const auto l = predict(model, part, &cube).labels;
        labels.insert(labels.end(), l.begin(), l.end());
    }
    return labels;
}

inline SampleSet subset(const SampleSet& s, const std::vector<Index>& idx)
{
    SampleSet out;
    out.features.resize(s.dim(), static_cast<Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.features.col(static_cast<Index>(i)) = s.features.col(idx[i]);
        out.labels.push_back(s.labels[static_cast<std::size_t>(idx[i])]);
        if (!s.coords.empty())
            out.coords.push_back(s.coords[static_cast<std::size_t>(idx[i])]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

struct CvGrid {
    std::vector<double> c;
    std::vector<double> sigma; ///< shared by the spectral and spatial kernels

    /// C = 2^p, p = 1..15; sigma = 2^q, q = -6..1.
    static CvGrid published()
    {
        CvGrid g;
        for (int p = 1; p <= 15; ++p)
            g.c.push_back(std::ldexp(1.0, p));
        for (int q = -6; q <= 1; ++q)
            g.sigma.push_back(std::ldexp(1.0, q));
        return g;
    }
};

struct CvPoint {
    double c = 0.0;
    double sigma = 0.0;
    std::vector<double> fold_scores; ///< held-out overall accuracy per fold
    double mean = 0.0;
};

struct CvResult {
    double best_c = 0.0;
    double best_sigma = 0.0;
    std::vector<CvPoint> surface; ///< C-major, both axes ascending
};

/// Stratified fold index per sample: each class is shuffled and dealt round-robin.
inline std::vector<int> fold_assignment(const std::vector<int>& labels, int folds, std::uint64_t seed)
{
    if (folds < 2)
        throw ContractError("cross-validation needs at least 2 folds");
    const int m = detail::require_all_classes(labels);
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(m));
    for (std::size_t i = 0; i < labels.size(); ++i)
        members[static_cast<std::size_t>(labels[i] - 1)].push_back(i);
    Rng rng(derive_seed(seed, "cv-folds"));
    std::vector<int> fold(labels.size(), 0);
    for (int k = 0; k < m; ++k) {
        auto& idx = members[static_cast<std::size_t>(k)];
        if (static_cast<int>(idx.size()) < folds)
            throw ContractError("class " + std::to_string(k + 1) + " has " + std::to_string(idx.size())
                                + " samples, fewer than the " + std::to_string(folds) + " folds");
        rng.shuffle(std::span<std::size_t>(idx));
        for (std::size_t r = 0; r < idx.size(); ++r)
            fold[idx[r]] = static_cast<int>(r % static_cast<std::size_t>(folds));
    }
    return fold;
}

/// Mean held-out OA over every (C, sigma) grid point. The best point has the
/// highest mean; ties go to the smaller C, then the smaller sigma.
inline CvResult cross_validate(const ClassifierSpec& spec, CvGrid grid, const SampleSet& train_set,
                               const HsiCube* cube = nullptr, int folds = 3)
{
    if (grid.c.empty() || grid.sigma.empty())
        throw ContractError("cross_validate: grids must be non-empty");
    std::sort(grid.c.begin(), grid.c.end());
    std::sort(grid.sigma.begin(), grid.sigma.end());
    const auto fold = fold_assignment(train_set.labels, folds, spec.seed);

    std::vector<std::pair<SampleSet, SampleSet>> splits;
    for (int f = 0; f < folds; ++f) {
        std::vector<Index> fit_idx, held_idx;
        for (std::size_t i = 0; i < fold.size(); ++i)
            (fold[i] == f ? held_idx : fit_idx).push_back(static_cast<Index>(i));
        splits.emplace_back(subset(train_set, fit_idx), subset(train_set, held_idx));
    }

    CvResult res;
    double best = -1.0;
    for (double c : grid.c) {
        for (double sigma : grid.sigma) {
            ClassifierSpec s = spec;
            s.c = c;
            s.sigma_w = s.sigma_s = sigma;
            CvPoint pt{c, sigma, {}, 0.0};
            for (const auto& [fit_set, held] : splits) {
                const auto model = train(s, fit_set, cube).model;
                const auto pred = predict(model, held, cube);
                pt.fold_scores.push_back(oa(confusion(held.labels, pred.labels, model.classes)));
            }
            for (double v : pt.fold_scores)
                pt.mean += v;
            pt.mean /= static_cast<double>(folds);
            if (pt.mean > best) {
                best = pt.mean;
                res.best_c = c;
                res.best_sigma = sigma;
            }
            res.surface.push_back(std::move(pt));
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Model file: magic "SMLELM\0\0", u32 version, u32 reserved, then int64 and
// float64 fields (little-endian) and matrices as (int64 rows, int64 cols,
// column-major float64 data).
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t model_format_version = 1;

namespace detail {

class ModelReader {
public:
    explicit ModelReader(std::string bytes) : bytes_(std::move(bytes)) {}

    template <typename T>
    T get()
    {
        if (pos_ + sizeof(T) > bytes_.size())
            throw LoadError("model file is truncated");
        T v = from_little_endian<T>(reinterpret_cast<const unsigned char*>(bytes_.data()) + pos_);
        pos_ += sizeof(T);
        return v;
    }

    MatrixXd matrix()
    {
        const auto rows = get<std::int64_t>();
        const auto cols = get<std::int64_t>();
        if (rows < 0 || cols < 0 || (rows > 0 && cols > static_cast<std::int64_t>(bytes_.size()) / rows))
            throw LoadError("model file has an invalid matrix shape");
        MatrixXd m(rows, cols);
        for (Index i = 0; i < m.size(); ++i)
            m.data()[i] = get<double>();
        return m;
    }

    bool at_end() const { return pos_ == bytes_.size(); }

private:
    std::string bytes_;
    std::size_t pos_ = 0;
};

inline void put_matrix(std::string& out, const MatrixXd& m)
{
    append_little_endian<std::int64_t>(out, m.rows());
    append_little_endian<std::int64_t>(out, m.cols());
    for (Index i = 0; i < m.size(); ++i)
        append_little_endian<double>(out, m.data()[i]);
}

} // namespace detail

inline std::string serialize_model(const TrainedModel& m)
{
    std::string out("SMLELM\0\0", 8);
    detail::append_little_endian<std::uint32_t>(out, model_format_version);
    detail::append_little_endian<std::uint32_t>(out, 0);
    const auto& s = m.spec;
    for (std::int64_t v : {static_cast<std::int64_t>(s.variant), static_cast<std::int64_t>(s.wcf),
                           static_cast<std::int64_t>(m.classes), static_cast<std::int64_t>(m.bands),
                           static_cast<std::int64_t>(s.hidden), static_cast<std::int64_t>(s.wcf_cfg.rule),
                           static_cast<std::int64_t>(s.wcf_cfg.window), static_cast<std::int64_t>(s.seed),
                           static_cast<std::int64_t>(s.solver.mode), static_cast<std::int64_t>(s.solver.max_iters)})
        detail::append_little_endian(out, v);
    for (double v : {s.wcf_cfg.z, s.wcf_cfg.mu, s.c, s.sigma_w, s.sigma_s, s.solver.lambda,
                     s.solver.effective_gamma(), s.solver.tol_beta, s.solver.tol_grad, s.solver.lambda_floor_eps,
                     m.scaling.lo, m.scaling.hi})
        detail::append_little_endian(out, v);
    detail::put_matrix(out, m.hidden ? m.hidden->weights() : MatrixXd());
    detail::put_matrix(out, m.hidden ? MatrixXd(m.hidden->biases()) : MatrixXd());
    detail::put_matrix(out, m.coefficients);
    detail::put_matrix(out, m.train_spectral);
    detail::put_matrix(out, m.train_spatial);
    return out;
}

inline TrainedModel deserialize_model(std::string bytes)
{
    if (bytes.size() < 16 || bytes.compare(0, 8, std::string("SMLELM\0\0", 8)) != 0)
        throw LoadError("not a model file (bad magic)");
    detail::ModelReader rd(std::move(bytes));
    for (int i = 0; i < 8; ++i)
        rd.get<char>();
    if (const auto version = rd.get<std::uint32_t>(); version != model_format_version)
        throw LoadError("unsupported model format version " + std::to_string(version));
    rd.get<std::uint32_t>();

    TrainedModel m;
    auto& s = m.spec;
    const auto variant = rd.get<std::int64_t>();
    if (variant < 0 || variant > 2)
        throw LoadError("model file: unknown variant code");
    s.variant = static_cast<Variant>(variant);
    s.wcf = rd.get<std::int64_t>() != 0;
    m.classes = static_cast<int>(rd.get<std::int64_t>());
    m.bands = rd.get<std::int64_t>();
    s.hidden = rd.get<std::int64_t>();
    s.wcf_cfg.rule = rd.get<std::int64_t>() == 0 ? CombineRule::linear : CombineRule::sqrt;
    s.wcf_cfg.window = rd.get<std::int64_t>();
    s.seed = static_cast<std::uint64_t>(rd.get<std::int64_t>());
    s.solver.mode = rd.get<std::int64_t>() == 0 ? SolverMode::mm : SolverMode::admm;
    s.solver.max_iters = static_cast<int>(rd.get<std::int64_t>());
    s.wcf_cfg.z = rd.get<double>();
    s.wcf_cfg.mu = rd.get<double>();
    s.c = rd.get<double>();
    s.sigma_w = rd.get<double>();
    s.sigma_s = rd.get<double>();
    s.solver.lambda = rd.get<double>();
    s.solver.gamma = rd.get<double>();
    s.solver.tol_beta = rd.get<double>();
    s.solver.tol_grad = rd.get<double>();
    s.solver.lambda_floor_eps = rd.get<double>();
    m.scaling.lo = rd.get<double>();
    m.scaling.hi = rd.get<double>();
    MatrixXd w = rd.matrix();
    MatrixXd b = rd.matrix();
    m.coefficients = rd.matrix();
    m.train_spectral = rd.matrix();
    m.train_spatial = rd.matrix();
    if (!rd.at_end())
        throw LoadError("model file has trailing bytes");
    if (s.uses_hidden_layer()) {
        if (b.cols() != 1 || w.rows() != b.rows())
            throw LoadError("model file: inconsistent hidden layer");
        m.hidden.emplace(std::move(w), VectorXd(b.col(0)));
    }
    if (m.coefficients.cols() != m.classes)
        throw LoadError("model file: coefficient block does not match the class count");
    return m;
}

/// Writes through a temporary file so a failed save leaves no partial model.
inline void save_model(const std::filesystem::path& path, const TrainedModel& m)
{
    auto tmp = path;
    tmp += ".tmp";
    detail::write_file(tmp, serialize_model(m));
    std::filesystem::rename(tmp, path);
}

inline TrainedModel load_model(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw LoadError("cannot open model file '" + path.string() + "'");
    return deserialize_model(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
}

} // namespace smlelm
