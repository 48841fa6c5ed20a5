#include "esiqa/data/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include <jpeglib.h>
#include <png.h>

namespace esiqa::data {

namespace {

enum class Format { png, jpeg, unknown };

Format sniff(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageError("image: cannot open " + path);
    unsigned char head[8] = {};
    in.read(reinterpret_cast<char*>(head), sizeof head);
    if (in.gcount() >= 8 && png_sig_cmp(head, 0, 8) == 0) return Format::png;
    if (in.gcount() >= 3 && head[0] == 0xFF && head[1] == 0xD8 && head[2] == 0xFF) return Format::jpeg;
    return Format::unknown;
}

Image load_png(const std::string& path) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) {
        throw ImageError("image: cannot decode PNG " + path + ": " + img.message);
    }
    img.format = PNG_FORMAT_RGB;
    Image out;
    out.width = img.width;
    out.height = img.height;
    out.rgb.resize(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw ImageError("image: cannot decode PNG " + path + ": " + msg);
    }
    return out;
}

struct JpegErr {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_fail(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErr*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image load_jpeg(const std::string& path, bool header_only) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw ImageError("image: cannot open " + path);
    jpeg_decompress_struct cinfo;
    JpegErr err;
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_fail;
    Image out;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw ImageError("image: cannot decode JPEG " + path + ": " + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, file.get());
    jpeg_read_header(&cinfo, TRUE);
    out.width = cinfo.image_width;
    out.height = cinfo.image_height;
    if (!header_only) {
        cinfo.out_color_space = JCS_RGB;
        jpeg_start_decompress(&cinfo);
        out.rgb.resize(out.width * out.height * 3);
        while (cinfo.output_scanline < cinfo.output_height) {
            JSAMPROW row = out.rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
            jpeg_read_scanlines(&cinfo, &row, 1);
        }
        jpeg_finish_decompress(&cinfo);
    }
    jpeg_destroy_decompress(&cinfo);
    return out;
}

}  // namespace

Image load_image(const std::string& path) {
    switch (sniff(path)) {
        case Format::png: return load_png(path);
        case Format::jpeg: return load_jpeg(path, false);
        default: throw ImageError("image: " + path + " is neither PNG nor JPEG");
    }
}

std::array<std::size_t, 2> image_size(const std::string& path) {
    switch (sniff(path)) {
        case Format::png: {
            png_image img;
            std::memset(&img, 0, sizeof img);
            img.version = PNG_IMAGE_VERSION;
            if (!png_image_begin_read_from_file(&img, path.c_str())) {
                throw ImageError("image: cannot decode PNG " + path + ": " + img.message);
            }
            const std::array<std::size_t, 2> size{img.width, img.height};
            png_image_free(&img);
            return size;
        }
        case Format::jpeg: {
            const Image header = load_jpeg(path, true);
            return {header.width, header.height};
        }
        default: throw ImageError("image: " + path + " is neither PNG nor JPEG");
    }
}

void save_png(const std::string& path, const Image& image) {
    if (image.rgb.size() != image.width * image.height * 3 || image.width == 0 || image.height == 0) {
        throw ImageError("image: inconsistent buffer for " + path);
    }
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, image.rgb.data(), 0, nullptr)) {
        throw ImageError("image: cannot write PNG " + path + ": " + img.message);
    }
}

void save_jpeg(const std::string& path, const Image& image, int quality) {
    if (image.rgb.size() != image.width * image.height * 3 || image.width == 0 || image.height == 0) {
        throw ImageError("image: inconsistent buffer for " + path);
    }
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw ImageError("image: cannot write " + path);
    jpeg_compress_struct cinfo;
    JpegErr err;
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_fail;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        throw ImageError("image: cannot encode JPEG " + path + ": " + err.message);
    }
    jpeg_create_compress(&cinfo);
    jpeg_stdio_dest(&cinfo, file.get());
    cinfo.image_width = static_cast<JDIMENSION>(image.width);
    cinfo.image_height = static_cast<JDIMENSION>(image.height);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = const_cast<JSAMPLE*>(image.rgb.data() + static_cast<std::size_t>(cinfo.next_scanline) * image.width * 3);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
}

std::vector<double> resize_bilinear(const Image& image, std::size_t side) {
    if (side == 0) throw ImageError("image: resize side must be positive");
    if (image.width == 0 || image.height == 0) throw ImageError("image: empty image");
    std::vector<double> out(side * side * 3);
    const double sx = static_cast<double>(image.width) / static_cast<double>(side);
    const double sy = static_cast<double>(image.height) / static_cast<double>(side);
    auto sample = [&](double coord, double scale, std::size_t extent, std::size_t& i0, std::size_t& i1, double& t) {
        const double src = std::clamp((coord + 0.5) * scale - 0.5, 0.0, static_cast<double>(extent - 1));
        i0 = static_cast<std::size_t>(std::floor(src));
        i1 = std::min(i0 + 1, extent - 1);
        t = src - static_cast<double>(i0);
    };
    for (std::size_t y = 0; y < side; ++y) {
        std::size_t y0, y1;
        double ty;
        sample(static_cast<double>(y), sy, image.height, y0, y1, ty);
        for (std::size_t x = 0; x < side; ++x) {
            std::size_t x0, x1;
            double tx;
            sample(static_cast<double>(x), sx, image.width, x0, x1, tx);
            for (std::size_t c = 0; c < 3; ++c) {
                const double top = (1.0 - tx) * image.at(x0, y0, c) + tx * image.at(x1, y0, c);
                const double bottom = (1.0 - tx) * image.at(x0, y1, c) + tx * image.at(x1, y1, c);
                out[(y * side + x) * 3 + c] = ((1.0 - ty) * top + ty * bottom) / 255.0;
            }
        }
    }
    return out;
}

std::vector<double> preprocess(const Image& image, std::size_t side) {
    std::vector<double> v = resize_bilinear(image, side);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] - kChannelMean[i % 3]) / kChannelStd[i % 3];
    return v;
}

Tensor stack_batch(const std::vector<const std::vector<double>*>& samples, std::size_t side) {
    if (samples.empty()) throw ImageError("image: empty batch");
    const std::size_t per = side * side * 3;
    std::vector<double> data;
    data.reserve(per * samples.size());
    for (const auto* s : samples) {
        if (s->size() != per) throw ImageError("image: sample does not match the batch side");
        data.insert(data.end(), s->begin(), s->end());
    }
    return Tensor({samples.size(), side, side, 3}, std::move(data), false);
}

}  // namespace esiqa::data
