#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "smlelm/error.hpp"
#include "smlelm/rng.hpp"

namespace smlelm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct PixelCoord {
    Index row = 0;
    Index col = 0;
    friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

/// Hyperspectral cube, rows x cols x bands. Spectra are stored as the
/// columns of a bands x (rows*cols) matrix, pixel index = row*cols + col.
class HsiCube {
public:
    HsiCube() = default;

    HsiCube(Index rows, Index cols, MatrixXd pixels)
        : rows_(rows), cols_(cols), pixels_(std::move(pixels))
    {
        if (rows_ < 1 || cols_ < 1 || pixels_.rows() < 1)
            throw ContractError("HsiCube: rows, cols and bands must be >= 1");
        if (pixels_.cols() != rows_ * cols_)
            throw ContractError("HsiCube: pixel matrix has " + std::to_string(pixels_.cols())
                                + " columns, expected rows*cols = " + std::to_string(rows_ * cols_));
        if (!pixels_.allFinite())
            throw ContractError("HsiCube: values must be finite");
    }

    /// Builds a cube from band-sequential values (all of band 0, then band 1, ...).
    static HsiCube from_bsq(Index rows, Index cols, Index bands, const std::vector<double>& bsq)
    {
        if (static_cast<Index>(bsq.size()) != rows * cols * bands)
            throw ContractError("HsiCube: bsq buffer size does not match rows*cols*bands");
        MatrixXd pixels(bands, rows * cols);
        for (Index b = 0; b < bands; ++b)
            for (Index p = 0; p < rows * cols; ++p)
                pixels(b, p) = bsq[static_cast<std::size_t>(b * rows * cols + p)];
        return HsiCube(rows, cols, std::move(pixels));
    }

    Index rows() const { return rows_; }
    Index cols() const { return cols_; }
    Index bands() const { return pixels_.rows(); }
    Index pixel_count() const { return rows_ * cols_; }

    Index pixel_index(Index row, Index col) const { return row * cols_ + col; }

    double value(Index row, Index col, Index band) const { return pixels_(band, pixel_index(row, col)); }

    auto spectrum(Index row, Index col) const { return pixels_.col(pixel_index(row, col)); }

    /// bands x (rows*cols)
    const MatrixXd& pixels() const { return pixels_; }

private:
    Index rows_ = 0;
    Index cols_ = 0;
    MatrixXd pixels_;
};

/// Per-pixel labels, row-major; 0 marks unlabeled pixels, 1..M are classes.
class LabelGrid {
public:
    LabelGrid() = default;

    LabelGrid(Index rows, Index cols, std::vector<int> labels) : rows_(rows), cols_(cols), labels_(std::move(labels))
    {
        if (rows_ < 1 || cols_ < 1)
            throw ContractError("LabelGrid: rows and cols must be >= 1");
        if (static_cast<Index>(labels_.size()) != rows_ * cols_)
            throw ContractError("LabelGrid: label count does not match rows*cols");
        for (int l : labels_) {
            if (l < 0)
                throw ContractError("LabelGrid: negative label " + std::to_string(l));
            class_count_ = std::max(class_count_, l);
        }
    }

    Index rows() const { return rows_; }
    Index cols() const { return cols_; }
    int class_count() const { return class_count_; }
    int at(Index row, Index col) const { return labels_[static_cast<std::size_t>(row * cols_ + col)]; }
    const std::vector<int>& labels() const { return labels_; }

private:
    Index rows_ = 0;
    Index cols_ = 0;
    int class_count_ = 0;
    std::vector<int> labels_;
};

/// Column-per-sample feature matrix with labels and source pixel coordinates.
struct SampleSet {
    MatrixXd features; // d x n
    std::vector<int> labels;
    std::vector<PixelCoord> coords;

    Index size() const { return features.cols(); }
    Index dim() const { return features.rows(); }
};

// ---------------------------------------------------------------------------
// File formats: raw little-endian payload + JSON sidecar (payload path with
// its extension replaced by ".json").
// ---------------------------------------------------------------------------

inline std::filesystem::path sidecar_path(const std::filesystem::path& payload)
{
    auto p = payload;
    p.replace_extension(".json");
    return p;
}

namespace detail {

template <typename T>
T from_little_endian(const unsigned char* bytes)
{
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, bytes, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(buf, buf + sizeof(T));
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

template <typename T>
void append_little_endian(std::string& out, T value)
{
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(buf, buf + sizeof(T));
    out.append(reinterpret_cast<const char*>(buf), sizeof(T));
}

struct RasterHeader {
    Index rows = 0;
    Index cols = 0;
    Index bands = 0;
};

inline RasterHeader read_header(const std::filesystem::path& payload, const std::string& dtype)
{
    const auto side = sidecar_path(payload);
    std::ifstream in(side);
    if (!in)
        throw LoadError("missing header: cannot open sidecar '" + side.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("header '" + side.string() + "' is not valid JSON: " + e.what());
    }
    auto require_count = [&](const char* key) -> Index {
        if (!j.contains(key))
            throw LoadError("header '" + side.string() + "': missing field '" + key + "'");
        if (!j[key].is_number_integer() || j[key].get<long long>() < 1)
            throw LoadError("header '" + side.string() + "': field '" + key + "' must be a positive integer");
        return static_cast<Index>(j[key].get<long long>());
    };
    RasterHeader h{require_count("rows"), require_count("cols"), require_count("bands")};
    if (!j.contains("dtype") || j["dtype"] != dtype)
        throw LoadError("header '" + side.string() + "': field 'dtype' must be \"" + dtype + "\"");
    if (!j.contains("order") || j["order"] != "bsq")
        throw LoadError("header '" + side.string() + "': field 'order' must be \"bsq\"");
    return h;
}

inline std::string read_payload(const std::filesystem::path& payload, std::size_t expected_bytes)
{
    std::ifstream in(payload, std::ios::binary);
    if (!in)
        throw LoadError("cannot open payload '" + payload.string() + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() != expected_bytes)
        throw LoadError("payload '" + payload.string() + "': byte count " + std::to_string(bytes.size())
                        + " does not match rows*cols*bands*itemsize = " + std::to_string(expected_bytes));
    return bytes;
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw Error("write to '" + path.string() + "' failed");
}

inline void write_header(const std::filesystem::path& payload, Index rows, Index cols, Index bands,
                         const std::string& dtype)
{
    nlohmann::ordered_json j;
    j["rows"] = rows;
    j["cols"] = cols;
    j["bands"] = bands;
    j["dtype"] = dtype;
    j["order"] = "bsq";
    write_file(sidecar_path(payload), j.dump(2) + "\n");
}

} // namespace detail

/// Reads a little-endian f32 band-sequential cube and its JSON sidecar.
inline HsiCube load_cube(const std::filesystem::path& path)
{
    const auto h = detail::read_header(path, "f32le");
    const auto n = static_cast<std::size_t>(h.rows * h.cols * h.bands);
    const std::string bytes = detail::read_payload(path, n * 4);
    std::vector<double> values(n);
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
    for (std::size_t i = 0; i < n; ++i) {
        const float f = detail::from_little_endian<float>(raw + 4 * i);
        if (!std::isfinite(f))
            throw LoadError("payload '" + path.string() + "': non-finite value at element " + std::to_string(i)
                            + " (field 'values')");
        values[i] = f;
    }
    return HsiCube::from_bsq(h.rows, h.cols, h.bands, values);
}

/// Writes the cube as f32 little-endian BSQ. Values are narrowed to float.
inline void write_cube(const std::filesystem::path& path, const HsiCube& cube)
{
    std::string bytes;
    bytes.reserve(static_cast<std::size_t>(cube.pixels().size()) * 4);
    for (Index b = 0; b < cube.bands(); ++b)
        for (Index p = 0; p < cube.pixel_count(); ++p)
            detail::append_little_endian(bytes, static_cast<float>(cube.pixels()(b, p)));
    detail::write_file(path, bytes);
    detail::write_header(path, cube.rows(), cube.cols(), cube.bands(), "f32le");
}

/// Reads a little-endian int16 row-major label raster (sidecar bands = 1).
inline LabelGrid load_labels(const std::filesystem::path& path)
{
    const auto h = detail::read_header(path, "i16le");
    if (h.bands != 1)
        throw LoadError("label header for '" + path.string() + "': field 'bands' must be 1");
    const auto n = static_cast<std::size_t>(h.rows * h.cols);
    const std::string bytes = detail::read_payload(path, n * 2);
    std::vector<int> labels(n);
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = detail::from_little_endian<std::int16_t>(raw + 2 * i);
        if (labels[i] < 0)
            throw LoadError("label payload '" + path.string() + "': negative label at element " + std::to_string(i));
    }
    return LabelGrid(h.rows, h.cols, std::move(labels));
}

inline void write_labels(const std::filesystem::path& path, const LabelGrid& grid)
{
    std::string bytes;
    for (int l : grid.labels()) {
        if (l > std::numeric_limits<std::int16_t>::max())
            throw ContractError("write_labels: label does not fit int16");
        detail::append_little_endian(bytes, static_cast<std::int16_t>(l));
    }
    detail::write_file(path, bytes);
    detail::write_header(path, grid.rows(), grid.cols(), 1, "i16le");
}

// ---------------------------------------------------------------------------
// Scaling
// ---------------------------------------------------------------------------

/// Global affine scaling parameters; a constant cube has lo == hi.
struct MinMax {
    double lo = 0.0;
    double hi = 1.0;
};

inline MinMax minmax_params(const HsiCube& cube)
{
    return {cube.pixels().minCoeff(), cube.pixels().maxCoeff()};
}

/// Maps values through (x - lo) / (hi - lo); lo == hi maps everything to 0.
inline HsiCube apply_scaling(const HsiCube& cube, const MinMax& s)
{
    const double range = s.hi - s.lo;
    MatrixXd px = range > 0.0 ? MatrixXd(((cube.pixels().array() - s.lo) / range).matrix())
                              : MatrixXd::Zero(cube.bands(), cube.pixel_count());
    return HsiCube(cube.rows(), cube.cols(), std::move(px));
}

inline HsiCube minmax_scale(const HsiCube& cube) { return apply_scaling(cube, minmax_params(cube)); }

// ---------------------------------------------------------------------------
// Labels and sampling
// ---------------------------------------------------------------------------

/// M x n indicator matrix; column i has a single 1 at row labels[i]-1.
inline MatrixXd one_hot(const std::vector<int>& labels, int class_count)
{
    if (class_count < 1)
        throw ContractError("one_hot: class count must be >= 1");
    MatrixXd y = MatrixXd::Zero(class_count, static_cast<Index>(labels.size()));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 1 || labels[i] > class_count)
            throw ContractError("one_hot: label " + std::to_string(labels[i]) + " outside 1.."
                                + std::to_string(class_count));
        y(labels[i] - 1, static_cast<Index>(i)) = 1.0;
    }
    return y;
}

inline void check_same_grid(const HsiCube& cube, const LabelGrid& grid)
{
    if (cube.rows() != grid.rows() || cube.cols() != grid.cols())
        throw ContractError("cube is " + std::to_string(cube.rows()) + "x" + std::to_string(cube.cols())
                            + " but label grid is " + std::to_string(grid.rows()) + "x"
                            + std::to_string(grid.cols()));
}

/// Gathers the spectra of the given pixels into a SampleSet.
inline SampleSet gather(const HsiCube& cube, const std::vector<PixelCoord>& coords, std::vector<int> labels)
{
    SampleSet s;
    s.features.resize(cube.bands(), static_cast<Index>(coords.size()));
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const auto& c = coords[i];
        if (c.row < 0 || c.row >= cube.rows() || c.col < 0 || c.col >= cube.cols())
            throw ContractError("pixel coordinate outside the cube");
        s.features.col(static_cast<Index>(i)) = cube.spectrum(c.row, c.col);
    }
    s.coords = coords;
    s.labels = std::move(labels);
    return s;
}

/// Every labeled pixel, in row-major order.
inline SampleSet flatten_labeled(const HsiCube& cube, const LabelGrid& grid)
{
    check_same_grid(cube, grid);
    std::vector<PixelCoord> coords;
    std::vector<int> labels;
    for (Index r = 0; r < grid.rows(); ++r)
        for (Index c = 0; c < grid.cols(); ++c)
            if (const int l = grid.at(r, c); l > 0) {
                coords.push_back({r, c});
                labels.push_back(l);
            }
    return gather(cube, coords, std::move(labels));
}

/// Every pixel of the cube, row-major, with label 0.
inline SampleSet flatten_all(const HsiCube& cube)
{
    std::vector<PixelCoord> coords;
    coords.reserve(static_cast<std::size_t>(cube.pixel_count()));
    for (Index r = 0; r < cube.rows(); ++r)
        for (Index c = 0; c < cube.cols(); ++c)
            coords.push_back({r, c});
    return gather(cube, coords, std::vector<int>(coords.size(), 0));
}

/// Per-class training size: a fraction of each class or a fixed count.
struct SplitSpec {
    enum class Mode { fraction, count };
    Mode mode = Mode::fraction;
    double fraction = 0.1;
    Index count = 10;

    static SplitSpec by_fraction(double f) { return {Mode::fraction, f, 0}; }
    static SplitSpec by_count(Index n) { return {Mode::count, 0.0, n}; }

    /// Number of training samples drawn from a class of the given size.
    Index train_size(Index class_size) const
    {
        if (mode == Mode::fraction) {
            const auto k = static_cast<Index>(std::floor(fraction * static_cast<double>(class_size) + 0.5));
            return std::clamp<Index>(k, 1, class_size);
        }
        // half-rule: never take more than ceil(size/2)
        return std::min(count, (class_size + 1) / 2);
    }

    void validate() const
    {
        if (mode == Mode::fraction && !(fraction > 0.0 && fraction < 1.0))
            throw ContractError("split fraction must lie in (0,1)");
        if (mode == Mode::count && count < 1)
            throw ContractError("split count must be >= 1");
    }
};

struct Split {
    SampleSet train;
    SampleSet test;
};

/// Seeded per-class split. Each class's pixels (row-major) are permuted by a
/// single generator, visiting classes in order 1..M; the first k go to train.
inline Split split_per_class(const LabelGrid& grid, const HsiCube& cube, const SplitSpec& spec, std::uint64_t seed)
{
    spec.validate();
    check_same_grid(cube, grid);
    const int m = grid.class_count();
    std::vector<std::vector<PixelCoord>> by_class(static_cast<std::size_t>(m));
    for (Index r = 0; r < grid.rows(); ++r)
        for (Index c = 0; c < grid.cols(); ++c)
            if (const int l = grid.at(r, c); l > 0)
                by_class[static_cast<std::size_t>(l - 1)].push_back({r, c});

    Rng rng(derive_seed(seed, "split"));
    std::vector<PixelCoord> train_coords, test_coords;
    std::vector<int> train_labels, test_labels;
    for (int k = 0; k < m; ++k) {
        auto& pix = by_class[static_cast<std::size_t>(k)];
        if (pix.empty())
            throw ContractError("split_per_class: class " + std::to_string(k + 1) + " has no labeled pixels");
        rng.shuffle(std::span<PixelCoord>(pix));
        const auto n_train = static_cast<std::size_t>(spec.train_size(static_cast<Index>(pix.size())));
        for (std::size_t i = 0; i < pix.size(); ++i) {
            auto& coords = i < n_train ? train_coords : test_coords;
            auto& labels = i < n_train ? train_labels : test_labels;
            coords.push_back(pix[i]);
            labels.push_back(k + 1);
        }
    }
    return {gather(cube, train_coords, std::move(train_labels)), gather(cube, test_coords, std::move(test_labels))};
}

} // namespace smlelm
