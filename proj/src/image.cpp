#include "nht/image.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <memory>

namespace nht {

void HdrImage::validate() const {
    if (width <= 0 || height <= 0 || channels <= 0)
        throw NhtError("HdrImage: empty dimensions");
    if (data.size() != size_t(width) * height * channels)
        throw NhtError("HdrImage: data length mismatch");
    for (float v : data) {
        if (!std::isfinite(v) || v < 0.0f)
            throw NhtError("HdrImage: non-finite or negative sample");
    }
}

double mulaw_encode_checked(double x, const MuLawParams& p) {
    if (!(x >= 0.0 && x <= p.w))
        throw NhtError("mulaw_encode: sample outside [0, w]");
    return mulaw_encode(x, p);
}

double mulaw_decode_checked(double y, const MuLawParams& p) {
    if (!(y >= 0.0 && y <= 1.0))
        throw NhtError("mulaw_decode: value outside [0, 1]");
    return mulaw_decode(y, p);
}

HdrImage tonemap(const HdrImage& img) {
    HdrImage out(img.width, img.height, img.channels, 1.0);
    for (size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = float(tonemap_sample(img.data[i], img.white_level));
    return out;
}

void sample_bilinear(const HdrImage& img, double x, double y, double* out) {
    double fx = x - 0.5, fy = y - 0.5;
    int x0 = int(std::floor(fx)), y0 = int(std::floor(fy));
    double tx = fx - x0, ty = fy - y0;
    auto cx = [&](int v) { return std::clamp(v, 0, img.width - 1); };
    auto cy = [&](int v) { return std::clamp(v, 0, img.height - 1); };
    const float* p00 = img.pixel(cx(x0), cy(y0));
    const float* p10 = img.pixel(cx(x0 + 1), cy(y0));
    const float* p01 = img.pixel(cx(x0), cy(y0 + 1));
    const float* p11 = img.pixel(cx(x0 + 1), cy(y0 + 1));
    for (int c = 0; c < img.channels; ++c) {
        double a = p00[c] + tx * (p10[c] - p00[c]);
        double b = p01[c] + tx * (p11[c] - p01[c]);
        out[c] = a + ty * (b - a);
    }
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

bool host_little_endian() {
    uint16_t v = 1;
    return *reinterpret_cast<uint8_t*>(&v) == 1;
}

void byteswap_floats(float* p, size_t n) {
    auto* b = reinterpret_cast<uint8_t*>(p);
    for (size_t i = 0; i < n; ++i, b += 4) {
        std::swap(b[0], b[3]);
        std::swap(b[1], b[2]);
    }
}

std::string read_pfm_token(std::FILE* f) {
    std::string t;
    int c;
    do {
        c = std::fgetc(f);
        if (c == '#') {  // comment to end of line
            while (c != EOF && c != '\n') c = std::fgetc(f);
        }
    } while (c != EOF && std::isspace(c));
    while (c != EOF && !std::isspace(c)) {
        t.push_back(char(c));
        c = std::fgetc(f);
    }
    if (t.empty()) throw NhtError("PFM: truncated header");
    return t;
}

}  // namespace

HdrImage load_pfm(const std::string& path, double white_level) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw NhtError("cannot open file: " + path);
    std::string magic = read_pfm_token(f.get());
    if (magic != "PF" && magic != "Pf")
        throw NhtError("PFM: bad magic in " + path);
    int channels = magic == "PF" ? 3 : 1;
    int w = std::stoi(read_pfm_token(f.get()));
    int h = std::stoi(read_pfm_token(f.get()));
    double scale = std::stod(read_pfm_token(f.get()));
    if (w <= 0 || h <= 0) throw NhtError("PFM: bad dimensions");
    HdrImage img(w, h, channels, white_level);
    size_t row = size_t(w) * channels;
    std::vector<float> buf(row);
    // PFM stores rows bottom-up.
    for (int y = h - 1; y >= 0; --y) {
        if (std::fread(buf.data(), 4, row, f.get()) != row)
            throw NhtError("PFM: truncated pixel data");
        if ((scale < 0.0) != host_little_endian())
            byteswap_floats(buf.data(), row);
        std::memcpy(&img.data[size_t(y) * row], buf.data(), row * 4);
    }
    img.validate();
    return img;
}

void save_pfm(const HdrImage& img, const std::string& path) {
    if (img.channels != 3 && img.channels != 1)
        throw NhtError("PFM: only 1 or 3 channels supported");
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw NhtError("cannot write file: " + path);
    double scale = host_little_endian() ? -1.0 : 1.0;
    std::fprintf(f.get(), "%s\n%d %d\n%f\n", img.channels == 3 ? "PF" : "Pf",
                 img.width, img.height, scale);
    size_t row = size_t(img.width) * img.channels;
    for (int y = img.height - 1; y >= 0; --y) {
        if (std::fwrite(&img.data[size_t(y) * row], 4, row, f.get()) != row)
            throw NhtError("PFM: short write");
    }
}

HdrImage load_png(const std::string& path, double white_level) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw NhtError("cannot open file: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw NhtError("PNG: init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw NhtError("PNG: decode error in " + path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int depth = png_get_bit_depth(png, info);
    int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (depth == 16) png_set_swap(png);  // stream is big-endian
    png_read_update_info(png, info);
    depth = png_get_bit_depth(png, info);

    HdrImage img(int(w), int(h), 3, white_level);
    double full = depth == 16 ? 65535.0 : 255.0;
    std::vector<uint8_t> rowbuf(png_get_rowbytes(png, info));
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, rowbuf.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double s;
                if (depth == 16)
                    s = reinterpret_cast<uint16_t*>(rowbuf.data())[x * 3 + c] / full;
                else
                    s = rowbuf[x * 3 + c] / full;
                img.at(int(x), int(y), c) = float(srgb_to_linear(s) * white_level);
            }
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    img.validate();
    return img;
}

void save_png16(const HdrImage& display_img, const std::string& path) {
    if (display_img.channels != 3) throw NhtError("PNG: expected 3 channels");
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw NhtError("cannot write file: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw NhtError("PNG: init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw NhtError("PNG: encode error");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, display_img.width, display_img.height, 16,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<uint16_t> row(size_t(display_img.width) * 3);
    for (int y = 0; y < display_img.height; ++y) {
        for (int x = 0; x < display_img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = std::clamp(double(display_img.at(x, y, c)), 0.0, 1.0);
                uint16_t q = uint16_t(std::lround(v * 65535.0));
                // libpng wants big-endian samples
                row[size_t(x) * 3 + c] = uint16_t((q >> 8) | (q << 8));
            }
        png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

HdrImage load_image(const std::string& path, double white_level) {
    auto dot = path.find_last_of('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    for (auto& c : ext) c = char(std::tolower(c));
    if (ext == ".pfm") return load_pfm(path, white_level);
    if (ext == ".png") return load_png(path, white_level);
    throw NhtError("unsupported image format: " + path);
}

}  // namespace nht
