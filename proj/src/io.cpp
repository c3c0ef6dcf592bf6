// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#include "dge/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

namespace dge::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written in host order and assume a little-endian host");

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw RuntimeFailure("cannot open " + path.string());
    return f;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot open " + path.string() + " for writing");
    return out;
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeFailure("cannot open " + path.string());
    return in;
}

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const fs::path& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw ValidationError("truncated file " + path.string());
    return v;
}

constexpr char kImageMagic[] = "DGEIMG1";
constexpr std::size_t kImageMagicLen = 7;

}  // namespace

void write_png(const fs::path& path, const Image& image) {
    if (image.channels() != 1 && image.channels() != 3) {
        throw ValidationError("write_png: only 1 or 3 channel images are supported");
    }
    FilePtr f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw RuntimeFailure("write_png: libpng initialization failed");
    }
    std::vector<png_byte> row(static_cast<std::size_t>(image.width()) * image.channels());
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw RuntimeFailure("write_png: libpng error writing " + path.string());
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, image.width(), image.height(), 8,
                 image.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            for (int c = 0; c < image.channels(); ++c) {
                const double v = std::clamp(image.at(x, y, c), 0.0, 1.0);
                row[static_cast<std::size_t>(x) * image.channels() + c] =
                    static_cast<png_byte>(std::lround(v * 255.0));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const fs::path& path) {
    FilePtr f = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw RuntimeFailure("read_png: libpng initialization failed");
    }
    Image image;
    std::vector<png_byte> row;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ValidationError("read_png: invalid PNG " + path.string());
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    const png_byte color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int channels = png_get_channels(png, info);
    image = Image(width, height, channels);
    row.resize(png_get_rowbytes(png, info));
    for (int y = 0; y < height; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < channels; ++c) {
                image.at(x, y, c) = row[static_cast<std::size_t>(x) * channels + c] / 255.0;
            }
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

void write_dgeimg(const fs::path& path, const Image& image) {
    std::ofstream out = open_out(path);
    out.write(kImageMagic, kImageMagicLen);
    put<std::int32_t>(out, image.width());
    put<std::int32_t>(out, image.height());
    put<std::int32_t>(out, image.channels());
    for (double v : image.values()) put<float>(out, static_cast<float>(v));
    if (!out) throw RuntimeFailure("write_dgeimg: failed writing " + path.string());
}

Image read_dgeimg(const fs::path& path) {
    std::ifstream in = open_in(path);
    char magic[kImageMagicLen];
    in.read(magic, kImageMagicLen);
    if (!in || std::memcmp(magic, kImageMagic, kImageMagicLen) != 0) {
        throw ValidationError("read_dgeimg: bad magic in " + path.string());
    }
    const auto w = get<std::int32_t>(in, path);
    const auto h = get<std::int32_t>(in, path);
    const auto c = get<std::int32_t>(in, path);
    if (w < 1 || h < 1 || c < 1) throw ValidationError("read_dgeimg: bad dimensions in " + path.string());
    Image image(w, h, c);
    for (double& v : image.values()) v = get<float>(in, path);
    return image;
}

namespace {

std::vector<std::string> ply_property_names(int sh_degree) {
    std::vector<std::string> names = {"x", "y", "z", "opacity", "scale_0", "scale_1", "scale_2",
                                      "rot_0", "rot_1", "rot_2", "rot_3", "f_dc_0", "f_dc_1", "f_dc_2"};
    const int rest = 3 * (sh_basis_count(sh_degree) - 1);
    for (int i = 0; i < rest; ++i) names.push_back("f_rest_" + std::to_string(i));
    return names;
}

fs::path sidecar_path(const fs::path& path) { return fs::path(path.string() + ".json"); }

}  // namespace

void write_ply(const fs::path& path, const GaussianMixture& mix) {
    mix.validate();
    const int basis = sh_basis_count(mix.sh_degree());
    const auto names = ply_property_names(mix.sh_degree());
    std::ofstream out = open_out(path);
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << mix.size() << "\n";
    for (const auto& n : names) out << "property float " << n << "\n";
    out << "end_header\n";
    for (const auto& p : mix.primitives()) {
        for (int i = 0; i < 3; ++i) put<float>(out, static_cast<float>(p.mean[i]));
        put<float>(out, static_cast<float>(p.opacity));
        for (int i = 0; i < 3; ++i) put<float>(out, static_cast<float>(p.scale[i]));
        for (int i = 0; i < 4; ++i) put<float>(out, static_cast<float>(p.orientation[i]));
        for (int j = 0; j < 3; ++j) put<float>(out, static_cast<float>(p.sh[j]));
        for (int j = 0; j < 3; ++j) {
            for (int k = 1; k < basis; ++k) put<float>(out, static_cast<float>(p.sh[k * 3 + j]));
        }
    }
    if (!out) throw RuntimeFailure("write_ply: failed writing " + path.string());
    write_json(sidecar_path(path), json{{"sh_degree", mix.sh_degree()}});
}

GaussianMixture read_ply(const fs::path& path) {
    std::ifstream in = open_in(path);
    std::string line;
    std::getline(in, line);
    if (line != "ply") throw ValidationError("read_ply: not a PLY file: " + path.string());
    struct Prop {
        std::string name;
        std::size_t size;
        bool is_double;
    };
    std::vector<Prop> props;
    std::size_t count = 0;
    bool in_vertex = false, seen_vertex = false, binary_le = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "end_header") break;
        if (word == "format") {
            std::string fmt;
            ls >> fmt;
            binary_le = fmt == "binary_little_endian";
        } else if (word == "element") {
            std::string name;
            std::size_t n = 0;
            ls >> name >> n;
            if (name == "vertex") {
                in_vertex = true;
                seen_vertex = true;
                count = n;
            } else {
                if (!seen_vertex) throw ValidationError("read_ply: elements before 'vertex' are not supported");
                in_vertex = false;
            }
        } else if (word == "property" && in_vertex) {
            std::string type, name;
            ls >> type >> name;
            if (type == "list") throw ValidationError("read_ply: list properties are not supported");
            std::size_t size = 0;
            bool is_double = false;
            if (type == "float" || type == "float32") size = 4;
            else if (type == "double" || type == "float64") size = 8, is_double = true;
            else if (type == "uchar" || type == "char" || type == "uint8" || type == "int8") size = 1;
            else if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") size = 2;
            else if (type == "int" || type == "uint" || type == "int32" || type == "uint32") size = 4;
            else throw ValidationError("read_ply: unsupported property type " + type);
            props.push_back({name, size, is_double});
        }
    }
    if (!binary_le) throw ValidationError("read_ply: only binary_little_endian is supported");
    if (!seen_vertex) throw ValidationError("read_ply: no vertex element");

    auto find = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < props.size(); ++i) {
            if (props[i].name == name) return static_cast<int>(i);
        }
        return -1;
    };
    int rest_count = 0;
    while (find("f_rest_" + std::to_string(rest_count)) >= 0) ++rest_count;
    int degree = -1;
    if (fs::exists(sidecar_path(path))) {
        degree = read_json(sidecar_path(path)).at("sh_degree").get<int>();
    } else {
        for (int l = 0; l <= kMaxShDegree; ++l) {
            if (3 * (sh_basis_count(l) - 1) == rest_count) degree = l;
        }
    }
    if (degree < 0 || degree > kMaxShDegree || 3 * (sh_basis_count(degree) - 1) > rest_count) {
        throw ValidationError("read_ply: cannot determine a supported SH degree");
    }
    const auto names = ply_property_names(degree);
    std::vector<int> slot(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) {
        slot[i] = find(names[i]);
        if (slot[i] < 0) throw ValidationError("read_ply: missing property " + names[i]);
        if (props[slot[i]].size != 4 && !props[slot[i]].is_double) {
            throw ValidationError("read_ply: property " + names[i] + " must be float");
        }
    }
    const int basis = sh_basis_count(degree);
    GaussianMixture mix(degree);
    std::vector<double> values(props.size());
    for (std::size_t v = 0; v < count; ++v) {
        for (std::size_t i = 0; i < props.size(); ++i) {
            if (props[i].is_double) {
                values[i] = get<double>(in, path);
            } else if (props[i].size == 4) {
                values[i] = get<float>(in, path);
            } else {
                char skip[8];
                in.read(skip, static_cast<std::streamsize>(props[i].size));
                if (!in) throw ValidationError("truncated file " + path.string());
            }
        }
        auto val = [&](std::size_t n) { return values[slot[n]]; };
        GaussianPrimitive p;
        p.mean = Vec3(val(0), val(1), val(2));
        p.opacity = std::max(0.0, val(3));
        p.scale = Vec3(val(4), val(5), val(6));
        p.orientation = Vec4(val(7), val(8), val(9), val(10));
        if (p.orientation.norm() > 0.0) p.orientation.normalize();
        p.sh.assign(3 * basis, 0.0);
        for (int j = 0; j < 3; ++j) p.sh[j] = val(11 + j);
        for (int j = 0; j < 3; ++j) {
            for (int k = 1; k < basis; ++k) p.sh[k * 3 + j] = val(14 + j * (basis - 1) + (k - 1));
        }
        try {
            mix.add(std::move(p));
        } catch (const ValidationError& e) {
            throw ValidationError(std::string("read_ply: vertex ") + std::to_string(v) + ": " + e.what());
        }
    }
    return mix;
}

json camera_to_json(const Camera& camera) {
    const Intrinsics& k = camera.intrinsics();
    json rot = json::array();
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) rot.push_back(camera.rotation()(r, c));
    }
    const Vec3& t = camera.translation();
    return json{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width},
                {"height", k.height}, {"rotation", rot}, {"translation", {t.x(), t.y(), t.z()}}};
}

Camera camera_from_json(const json& j) {
    try {
        Intrinsics k;
        k.fx = j.at("fx").get<double>();
        k.fy = j.at("fy").get<double>();
        k.cx = j.at("cx").get<double>();
        k.cy = j.at("cy").get<double>();
        k.width = j.at("width").get<int>();
        k.height = j.at("height").get<int>();
        const auto& rot = j.at("rotation");
        const auto& tr = j.at("translation");
        if (rot.size() != 9 || tr.size() != 3) throw ValidationError("camera: rotation needs 9 and translation 3 numbers");
        Mat3 r;
        for (int i = 0; i < 9; ++i) r(i / 3, i % 3) = rot.at(i).get<double>();
        return Camera(k, r, Vec3(tr.at(0).get<double>(), tr.at(1).get<double>(), tr.at(2).get<double>()));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("camera: ") + e.what());
    }
}

json cameras_to_json(const std::vector<Camera>& cameras) {
    json arr = json::array();
    for (const auto& c : cameras) arr.push_back(camera_to_json(c));
    return arr;
}

std::vector<Camera> cameras_from_json(const json& j) {
    const json& arr = j.is_object() && j.contains("cameras") ? j.at("cameras") : j;
    if (!arr.is_array()) throw ValidationError("cameras: expected an array");
    std::vector<Camera> out;
    for (const auto& c : arr) out.push_back(camera_from_json(c));
    return out;
}

void write_cameras(const fs::path& path, const std::vector<Camera>& cameras) {
    write_json(path, cameras_to_json(cameras));
}

std::vector<Camera> read_cameras(const fs::path& path) { return cameras_from_json(read_json(path)); }

json read_json(const fs::path& path) {
    std::ifstream in = open_in(path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out = open_out(path);
    out << j.dump(2) << "\n";
    if (!out) throw RuntimeFailure("failed writing " + path.string());
}

}  // namespace dge::io
