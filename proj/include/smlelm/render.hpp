#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "smlelm/data_model.hpp"
#include "smlelm/error.hpp"

namespace smlelm {

using Rgb = std::array<std::uint8_t, 3>;

/// Class-map palette: index 0 (unlabeled) is black, 1..16 are fixed colours.
/// Labels above 16 wrap around onto 1..16.
inline constexpr std::array<Rgb, 17> class_palette{{
    {0, 0, 0},       {255, 0, 0},     {0, 255, 0},     {0, 0, 255},     {255, 255, 0},   {0, 255, 255},
    {255, 0, 255},   {176, 48, 96},   {46, 139, 87},   {160, 32, 240},  {255, 127, 80},  {127, 255, 212},
    {218, 112, 214}, {160, 82, 45},   {127, 255, 0},   {216, 191, 216}, {238, 0, 0},
}};

inline Rgb class_colour(int label)
{
    if (label <= 0)
        return class_palette[0];
    return class_palette[static_cast<std::size_t>((label - 1) % 16 + 1)];
}

/// Binary P6 portable pixmap of a row-major label raster.
inline std::string class_map_ppm(const std::vector<int>& labels, Index rows, Index cols)
{
    if (static_cast<Index>(labels.size()) != rows * cols)
        throw ContractError("class map: label count does not match rows*cols");
    std::string out = "P6\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
    out.reserve(out.size() + labels.size() * 3);
    for (int l : labels) {
        const Rgb c = class_colour(l);
        out.append(reinterpret_cast<const char*>(c.data()), 3);
    }
    return out;
}

inline void write_class_map(const std::filesystem::path& path, const std::vector<int>& labels, Index rows, Index cols)
{
    detail::write_file(path, class_map_ppm(labels, rows, cols));
}

} // namespace smlelm
