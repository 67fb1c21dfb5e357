#include "invrend/image_io.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>

namespace invrend {

namespace {

bool host_is_little_endian() {
    uint16_t v = 1;
    uint8_t b;
    std::memcpy(&b, &v, 1);
    return b == 1;
}

}  // namespace

void save_pfm(const std::string& path, const Imagef& img) {
    if (img.channels != 1 && img.channels != 3)
        throw std::runtime_error("PFM supports 1 or 3 channels");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << (img.channels == 3 ? "PF" : "Pf") << "\n"
      << img.width << " " << img.height << "\n"
      << "-1.0\n";
    // Bottom row first per the PFM convention.
    for (int y = img.height - 1; y >= 0; --y) {
        const float* row = &img.data[size_t(y) * img.width * img.channels];
        f.write(reinterpret_cast<const char*>(row),
                std::streamsize(sizeof(float)) * img.width * img.channels);
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

Imagef load_pfm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string magic;
    f >> magic;
    int channels;
    if (magic == "PF") channels = 3;
    else if (magic == "Pf") channels = 1;
    else throw std::runtime_error("not a PFM file: " + path);
    int w, h;
    double scale;
    f >> w >> h >> scale;
    f.get();  // single whitespace after the scale line
    if (w <= 0 || h <= 0) throw std::runtime_error("bad PFM dimensions: " + path);
    const bool file_le = scale < 0;
    Imagef img(w, h, channels);
    std::vector<float> row(size_t(w) * channels);
    for (int y = h - 1; y >= 0; --y) {
        f.read(reinterpret_cast<char*>(row.data()), std::streamsize(sizeof(float)) * row.size());
        if (!f) throw std::runtime_error("truncated PFM: " + path);
        if (file_le != host_is_little_endian()) {
            for (float& v : row) {
                uint32_t u;
                std::memcpy(&u, &v, 4);
                u = __builtin_bswap32(u);
                std::memcpy(&v, &u, 4);
            }
        }
        std::memcpy(&img.data[size_t(y) * w * channels], row.data(), sizeof(float) * row.size());
    }
    return img;
}

namespace {

void png_write_chunk(std::ofstream& f, const char type[4], const uint8_t* data, size_t len) {
    auto be32 = [](uint32_t v) {
        uint8_t b[4] = {uint8_t(v >> 24), uint8_t(v >> 16), uint8_t(v >> 8), uint8_t(v)};
        return std::string(reinterpret_cast<char*>(b), 4);
    };
    f << be32(uint32_t(len));
    f.write(type, 4);
    if (len) f.write(reinterpret_cast<const char*>(data), std::streamsize(len));
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
    if (len) crc = crc32(crc, data, uInt(len));
    f << be32(uint32_t(crc));
}

void save_png_impl(const std::string& path, const Imaged& img, int bitdepth, bool gamma_preview,
                   double exposure) {
    if (img.channels != 1 && img.channels != 3)
        throw std::runtime_error("PNG supports 1 or 3 channels");
    const int w = img.width, h = img.height, c = img.channels;
    const int bytes_per_sample = bitdepth / 8;
    const size_t stride = size_t(w) * c * bytes_per_sample;
    std::vector<uint8_t> raw((stride + 1) * h);
    const double maxval = bitdepth == 16 ? 65535.0 : 255.0;
    for (int y = 0; y < h; ++y) {
        uint8_t* row = &raw[(stride + 1) * y];
        *row++ = 0;  // filter: none
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                double v = img.at(x, y, ch) * exposure;
                if (gamma_preview) v = std::pow(std::max(v, 0.0), 1.0 / 2.2);
                uint32_t q = uint32_t(std::lround(clampd(v, 0.0, 1.0) * maxval));
                if (bitdepth == 16) {
                    *row++ = uint8_t(q >> 8);
                    *row++ = uint8_t(q & 0xff);
                } else {
                    *row++ = uint8_t(q);
                }
            }
    }
    uLongf comp_cap = compressBound(uLong(raw.size()));
    std::vector<uint8_t> comp(comp_cap);
    if (compress2(comp.data(), &comp_cap, raw.data(), uLong(raw.size()), 6) != Z_OK)
        throw std::runtime_error("zlib compression failed");
    comp.resize(comp_cap);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    f.write(reinterpret_cast<const char*>(sig), 8);
    uint8_t ihdr[13];
    auto put32 = [&](int off, uint32_t v) {
        ihdr[off] = uint8_t(v >> 24);
        ihdr[off + 1] = uint8_t(v >> 16);
        ihdr[off + 2] = uint8_t(v >> 8);
        ihdr[off + 3] = uint8_t(v);
    };
    put32(0, uint32_t(w));
    put32(4, uint32_t(h));
    ihdr[8] = uint8_t(bitdepth);
    ihdr[9] = c == 3 ? 2 : 0;  // truecolor or grayscale
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    png_write_chunk(f, "IHDR", ihdr, 13);
    png_write_chunk(f, "IDAT", comp.data(), comp.size());
    png_write_chunk(f, "IEND", nullptr, 0);
    if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace

void save_png16(const std::string& path, const Imaged& img) {
    save_png_impl(path, img, 16, false, 1.0);
}

void save_png_preview(const std::string& path, const Imaged& linear, double exposure) {
    save_png_impl(path, linear, 8, true, exposure);
}

}  // namespace invrend
