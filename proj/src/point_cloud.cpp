#include "rpbg/point_cloud.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "rpbg/errors.hpp"

namespace rpbg {

void PointCloud::validate() const {
    if (!colors.empty() && colors.size() != positions.size())
        throw DataError("point colors not aligned with positions");
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (!positions[i].allFinite())
            throw DataError("non-finite coordinate at point " + std::to_string(i));
    }
}

void PointCloud::append(const PointCloud& other) {
    const bool keep_colors = (has_colors() || empty()) && other.has_colors();
    positions.insert(positions.end(), other.positions.begin(), other.positions.end());
    if (keep_colors)
        colors.insert(colors.end(), other.colors.begin(), other.colors.end());
    else
        colors.clear();
}

PointCloud PointCloud::select(std::span<const bool> keep) const {
    if (keep.size() != positions.size()) throw ConfigError("selection mask length differs from point count");
    PointCloud out;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (!keep[i]) continue;
        out.positions.push_back(positions[i]);
        if (has_colors()) out.colors.push_back(colors[i]);
    }
    return out;
}

namespace {

enum class ScalarType { I8, U8, I16, U16, I32, U32, F32, F64 };

std::size_t scalar_size(ScalarType t) {
    switch (t) {
        case ScalarType::I8:
        case ScalarType::U8: return 1;
        case ScalarType::I16:
        case ScalarType::U16: return 2;
        case ScalarType::I32:
        case ScalarType::U32:
        case ScalarType::F32: return 4;
        case ScalarType::F64: return 8;
    }
    return 0;
}

ScalarType parse_scalar(const std::string& name, const std::filesystem::path& path) {
    if (name == "char" || name == "int8") return ScalarType::I8;
    if (name == "uchar" || name == "uint8") return ScalarType::U8;
    if (name == "short" || name == "int16") return ScalarType::I16;
    if (name == "ushort" || name == "uint16") return ScalarType::U16;
    if (name == "int" || name == "int32") return ScalarType::I32;
    if (name == "uint" || name == "uint32") return ScalarType::U32;
    if (name == "float" || name == "float32") return ScalarType::F32;
    if (name == "double" || name == "float64") return ScalarType::F64;
    throw FormatError(path.string() + ": unknown PLY property type '" + name + "'");
}

double decode_scalar(ScalarType t, const char* p) {
    switch (t) {
        case ScalarType::I8: { std::int8_t v; std::memcpy(&v, p, 1); return v; }
        case ScalarType::U8: { std::uint8_t v; std::memcpy(&v, p, 1); return v; }
        case ScalarType::I16: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
        case ScalarType::U16: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
        case ScalarType::I32: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
        case ScalarType::U32: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
        case ScalarType::F32: { float v; std::memcpy(&v, p, 4); return v; }
        case ScalarType::F64: { double v; std::memcpy(&v, p, 8); return v; }
    }
    return 0.0;
}

struct Property {
    std::string name;
    ScalarType type = ScalarType::F32;
    bool is_list = false;
};

struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<Property> properties;
};

struct Header {
    PlyEncoding encoding = PlyEncoding::Ascii;
    std::vector<Element> elements;
};

Header read_header(std::istream& in, const std::filesystem::path& path) {
    std::string line;
    if (!std::getline(in, line) || line.substr(0, 3) != "ply")
        throw FormatError(path.string() + ": not a PLY file (bad magic)");
    Header header;
    bool have_format = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "ascii")
                header.encoding = PlyEncoding::Ascii;
            else if (fmt == "binary_little_endian")
                header.encoding = PlyEncoding::BinaryLittleEndian;
            else
                throw FormatError(path.string() + ": unsupported PLY format '" + fmt + "'");
            have_format = true;
        } else if (key == "element") {
            Element e;
            ls >> e.name >> e.count;
            if (!ls) throw FormatError(path.string() + ": malformed element line");
            header.elements.push_back(std::move(e));
        } else if (key == "property") {
            if (header.elements.empty()) throw FormatError(path.string() + ": property before element");
            std::string type;
            ls >> type;
            Property p;
            if (type == "list") {
                std::string count_type, item_type;
                ls >> count_type >> item_type;
                p.is_list = true;
                p.type = parse_scalar(item_type, path);
            } else {
                p.type = parse_scalar(type, path);
            }
            ls >> p.name;
            header.elements.back().properties.push_back(p);
        } else if (key == "end_header") {
            if (!have_format) throw FormatError(path.string() + ": missing format line");
            return header;
        }
        // comment / obj_info lines are ignored
    }
    throw FormatError(path.string() + ": truncated PLY header");
}

}  // namespace

PointCloud load_point_cloud(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string(), "E_IO");
    const Header header = read_header(in, path);

    PointCloud cloud;
    bool found_vertex = false;
    for (const Element& element : header.elements) {
        const bool is_vertex = element.name == "vertex";
        int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
        for (std::size_t k = 0; k < element.properties.size(); ++k) {
            const auto& n = element.properties[k].name;
            const int ki = static_cast<int>(k);
            if (n == "x") ix = ki;
            if (n == "y") iy = ki;
            if (n == "z") iz = ki;
            if (n == "red" || n == "r") ir = ki;
            if (n == "green" || n == "g") ig = ki;
            if (n == "blue" || n == "b") ib = ki;
        }
        if (is_vertex && (ix < 0 || iy < 0 || iz < 0))
            throw FormatError(path.string() + ": vertex element lacks x/y/z");
        const bool has_rgb = is_vertex && ir >= 0 && ig >= 0 && ib >= 0;
        auto color_scale = [&](int k) {
            const ScalarType t = element.properties[static_cast<std::size_t>(k)].type;
            return (t == ScalarType::F32 || t == ScalarType::F64) ? 1.0 : 1.0 / 255.0;
        };

        std::vector<double> values(element.properties.size());
        for (std::size_t row = 0; row < element.count; ++row) {
            if (header.encoding == PlyEncoding::Ascii) {
                std::string line;
                do {
                    if (!std::getline(in, line))
                        throw FormatError(path.string() + ": truncated PLY body in element '" + element.name + "'");
                } while (line.find_first_not_of(" \t\r") == std::string::npos);
                std::istringstream ls(line);
                for (std::size_t k = 0; k < element.properties.size(); ++k) {
                    if (element.properties[k].is_list) {
                        std::size_t n = 0;
                        ls >> n;
                        double skip;
                        for (std::size_t j = 0; j < n; ++j) ls >> skip;
                        values[k] = 0.0;
                    } else {
                        ls >> values[k];
                    }
                }
                if (!ls) throw FormatError(path.string() + ": malformed PLY row " + std::to_string(row));
            } else {
                for (std::size_t k = 0; k < element.properties.size(); ++k) {
                    const Property& p = element.properties[k];
                    if (p.is_list) {
                        if (is_vertex) throw FormatError(path.string() + ": list property on vertex element");
                        // Only uchar counts are supported for skipped list elements.
                        std::uint8_t n = 0;
                        in.read(reinterpret_cast<char*>(&n), 1);
                        in.ignore(static_cast<std::streamsize>(n * scalar_size(p.type)));
                        values[k] = 0.0;
                    } else {
                        char buf[8];
                        in.read(buf, static_cast<std::streamsize>(scalar_size(p.type)));
                        values[k] = decode_scalar(p.type, buf);
                    }
                }
                if (!in) throw FormatError(path.string() + ": truncated PLY body in element '" + element.name + "'");
            }
            if (!is_vertex) continue;
            cloud.positions.emplace_back(static_cast<float>(values[ix]), static_cast<float>(values[iy]),
                                         static_cast<float>(values[iz]));
            if (has_rgb) {
                cloud.colors.emplace_back(static_cast<float>(values[ir] * color_scale(ir)),
                                          static_cast<float>(values[ig] * color_scale(ig)),
                                          static_cast<float>(values[ib] * color_scale(ib)));
            }
        }
        if (is_vertex) {
            found_vertex = true;
            break;
        }
    }
    if (!found_vertex) throw FormatError(path.string() + ": no vertex element");
    cloud.validate();
    return cloud;
}

void save_point_cloud(const PointCloud& cloud, const std::filesystem::path& path, PlyEncoding encoding) {
    cloud.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string(), "E_IO");
    const bool rgb = cloud.has_colors();
    out << "ply\n"
        << (encoding == PlyEncoding::Ascii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n")
        << "element vertex " << cloud.size() << "\n"
        << "property float x\nproperty float y\nproperty float z\n";
    if (rgb) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "end_header\n";

    auto to_byte = [](float c) {
        const float v = std::round(std::clamp(c, 0.0f, 1.0f) * 255.0f);
        return static_cast<std::uint8_t>(v);
    };
    if (encoding == PlyEncoding::Ascii) {
        out.precision(9);
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const Vec3f& p = cloud.positions[i];
            out << p.x() << ' ' << p.y() << ' ' << p.z();
            if (rgb) {
                for (int c = 0; c < 3; ++c) out << ' ' << static_cast<int>(to_byte(cloud.colors[i][c]));
            }
            out << '\n';
        }
    } else {
        static_assert(std::endian::native == std::endian::little, "binary PLY writer assumes little-endian host");
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const Vec3f& p = cloud.positions[i];
            const float xyz[3] = {p.x(), p.y(), p.z()};
            out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
            if (rgb) {
                const std::uint8_t c[3] = {to_byte(cloud.colors[i][0]), to_byte(cloud.colors[i][1]),
                                           to_byte(cloud.colors[i][2])};
                out.write(reinterpret_cast<const char*>(c), 3);
            }
        }
    }
    if (!out) throw DataError("failed writing " + path.string(), "E_IO");
}

}  // namespace rpbg
