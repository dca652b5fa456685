#include "vts/core/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>

#include "vts/core/error.hpp"

namespace vts::png {

namespace {

struct MemoryReader {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos;
};

struct ErrorSink {
    char message[256];
};

void on_error(png_structp png, png_const_charp msg) {
    auto* sink = static_cast<ErrorSink*>(png_get_error_ptr(png));
    std::snprintf(sink->message, sizeof(sink->message), "%s", msg);
    png_longjmp(png, 1);
}

void on_warning(png_structp, png_const_charp) {}

void read_callback(png_structp png, png_bytep out, png_size_t count) {
    auto* reader = static_cast<MemoryReader*>(png_get_io_ptr(png));
    if (reader->pos + count > reader->size) png_error(png, "truncated PNG stream");
    std::memcpy(out, reader->data + reader->pos, count);
    reader->pos += count;
}

void write_callback(png_structp png, png_bytep data, png_size_t count) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + count);
}

void flush_callback(png_structp) {}

// Keeps all locals trivially destructible between setjmp and any longjmp.
bool decode_impl(const std::uint8_t* bytes, std::size_t size, RawImage* img, std::vector<std::uint8_t>* rowbuf,
                 ErrorSink* sink) {
    MemoryReader reader{bytes, size, 0};
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, sink, on_error, on_warning);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        return false;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    png_set_read_fn(png, &reader, read_callback);
    png_read_info(png, info);

    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (depth == 16) png_set_swap(png);  // host little-endian samples
    png_read_update_info(png, info);

    img->rows = static_cast<int>(png_get_image_height(png, info));
    img->cols = static_cast<int>(png_get_image_width(png, info));
    img->channels = png_get_channels(png, info);
    img->bit_depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    rowbuf->resize(rowbytes * static_cast<std::size_t>(img->rows));
    for (int r = 0; r < img->rows; ++r) png_read_row(png, rowbuf->data() + rowbytes * static_cast<std::size_t>(r), nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

bool encode_impl(const RawImage* img, const std::vector<std::uint8_t>* rows, std::vector<std::uint8_t>* out,
                 ErrorSink* sink) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, sink, on_error, on_warning);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        return false;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    int color = PNG_COLOR_TYPE_GRAY;
    if (img->channels == 2) color = PNG_COLOR_TYPE_GRAY_ALPHA;
    if (img->channels == 3) color = PNG_COLOR_TYPE_RGB;
    if (img->channels == 4) color = PNG_COLOR_TYPE_RGB_ALPHA;
    png_set_write_fn(png, out, write_callback, flush_callback);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img->cols), static_cast<png_uint_32>(img->rows), img->bit_depth,
                 color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (img->bit_depth == 16) png_set_swap(png);
    const std::size_t rowbytes =
        static_cast<std::size_t>(img->cols) * static_cast<std::size_t>(img->channels) * (img->bit_depth / 8);
    for (int r = 0; r < img->rows; ++r)
        png_write_row(png, const_cast<png_bytep>(rows->data() + rowbytes * static_cast<std::size_t>(r)));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

}  // namespace

RawImage decode(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw IoError("not a PNG stream");
    RawImage img;
    std::vector<std::uint8_t> rowbuf;
    ErrorSink sink{};
    if (!decode_impl(bytes.data(), bytes.size(), &img, &rowbuf, &sink))
        throw IoError(std::string("PNG decode failed: ") + sink.message);

    const std::size_t n = static_cast<std::size_t>(img.rows) * img.cols * img.channels;
    img.samples.resize(n);
    if (img.bit_depth == 16) {
        std::memcpy(img.samples.data(), rowbuf.data(), n * sizeof(std::uint16_t));
    } else {
        std::copy(rowbuf.begin(), rowbuf.begin() + static_cast<std::ptrdiff_t>(n), img.samples.begin());
    }
    return img;
}

std::vector<std::uint8_t> encode(const RawImage& img) {
    if (img.bit_depth != 8 && img.bit_depth != 16) throw IoError("PNG encode: bit depth must be 8 or 16");
    if (img.channels < 1 || img.channels > 4) throw IoError("PNG encode: 1-4 channels supported");
    const std::size_t n = static_cast<std::size_t>(img.rows) * img.cols * img.channels;
    if (img.samples.size() != n) throw IoError("PNG encode: sample count mismatch");

    std::vector<std::uint8_t> rows;
    if (img.bit_depth == 16) {
        rows.resize(n * 2);
        std::memcpy(rows.data(), img.samples.data(), n * 2);
    } else {
        rows.resize(n);
        for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<std::uint8_t>(std::min<std::uint16_t>(img.samples[i], 255));
    }
    std::vector<std::uint8_t> out;
    ErrorSink sink{};
    if (!encode_impl(&img, &rows, &out, &sink)) throw IoError(std::string("PNG encode failed: ") + sink.message);
    return out;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

RawImage read_file(const std::filesystem::path& path) {
    try {
        return decode(read_bytes(path));
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_file(const std::filesystem::path& path, const RawImage& img) { write_bytes(path, encode(img)); }

Image to_image(const RawImage& raw) {
    if (raw.bit_depth != 8) throw IoError("expected an 8-bit image, got " + std::to_string(raw.bit_depth) + "-bit");
    const int color_channels = (raw.channels >= 3) ? 3 : 1;
    Image img(color_channels, raw.rows, raw.cols);
    for (int r = 0; r < raw.rows; ++r)
        for (int c = 0; c < raw.cols; ++c) {
            const std::size_t base = (static_cast<std::size_t>(r) * raw.cols + c) * raw.channels;
            for (int k = 0; k < color_channels; ++k) img(k, r, c) = raw.samples[base + k] / 255.0;
        }
    return img;
}

Image read_image(const std::filesystem::path& path) {
    try {
        return to_image(read_file(path));
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

RawImage from_image8(const Image& img) {
    if (img.channels() != 1 && img.channels() != 3) throw IoError("8-bit export supports 1 or 3 channels");
    RawImage raw{img.rows(), img.cols(), img.channels(), 8, {}};
    raw.samples.resize(static_cast<std::size_t>(raw.rows) * raw.cols * raw.channels);
    for (int r = 0; r < raw.rows; ++r)
        for (int c = 0; c < raw.cols; ++c)
            for (int k = 0; k < raw.channels; ++k) {
                const double v = std::clamp(img(k, r, c), 0.0, 1.0);
                raw.samples[(static_cast<std::size_t>(r) * raw.cols + c) * raw.channels + k] =
                    static_cast<std::uint16_t>(std::lround(v * 255.0));
            }
    return raw;
}

void write_image8(const std::filesystem::path& path, const Image& img) { write_file(path, from_image8(img)); }

RawImage from_gray16(const Grid<std::uint16_t>& g) {
    RawImage raw{g.rows(), g.cols(), 1, 16, {}};
    raw.samples.assign(g.begin(), g.end());
    return raw;
}

Grid<std::uint16_t> read_gray16(const std::filesystem::path& path) {
    const RawImage raw = read_file(path);
    if (raw.bit_depth != 16 || raw.channels != 1)
        throw IoError(path.string() + ": expected 16-bit grayscale, got " + std::to_string(raw.bit_depth) + "-bit with " +
                      std::to_string(raw.channels) + " channel(s)");
    Grid<std::uint16_t> g(raw.rows, raw.cols);
    std::copy(raw.samples.begin(), raw.samples.end(), g.begin());
    return g;
}

void write_gray16(const std::filesystem::path& path, const Grid<std::uint16_t>& g) { write_file(path, from_gray16(g)); }

Mask read_mask(const std::filesystem::path& path) {
    const Image img = read_image(path);
    Mask m(img.rows(), img.cols());
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) m(r, c) = img(0, r, c) >= 0.5 ? 1 : 0;
    return m;
}

void write_mask(const std::filesystem::path& path, const Mask& m) {
    RawImage raw{m.rows(), m.cols(), 1, 8, {}};
    raw.samples.resize(m.size());
    std::transform(m.begin(), m.end(), raw.samples.begin(), [](std::uint8_t v) -> std::uint16_t { return v ? 255 : 0; });
    write_file(path, raw);
}

}  // namespace vts::png
