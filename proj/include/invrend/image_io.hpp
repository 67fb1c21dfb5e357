#pragma once

#include <string>

#include "invrend/core.hpp"

namespace invrend {

// PFM (portable float map), little-endian (negative scale field), rows
// stored bottom-to-top. 3-channel images use the "PF" header, single
// channel "Pf". These files are the project's lossless image format.
void save_pfm(const std::string& path, const Imagef& img);
Imagef load_pfm(const std::string& path);

inline Imagef to_float(const Imaged& img) {
    Imagef out(img.width, img.height, img.channels);
    for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = float(img.data[i]);
    return out;
}
inline Imaged to_double(const Imagef& img) {
    Imaged out(img.width, img.height, img.channels);
    for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = double(img.data[i]);
    return out;
}

// PNG writers (zlib-backed). Values are expected in [0,1]; 16-bit PNGs
// store linear values, the 8-bit preview applies gamma 1/2.2.
void save_png16(const std::string& path, const Imaged& img);
void save_png_preview(const std::string& path, const Imaged& linear, double exposure = 1.0);

}  // namespace invrend
