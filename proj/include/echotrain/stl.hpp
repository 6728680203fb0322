#pragma once

// STL reader/writer. Binary layout: 80-byte header, u32 facet count, then
// 50-byte facets (normal, three vertices as f32, u16 attribute).

#include <cctype>
#include <charconv>
#include <span>
#include <string>
#include <string_view>

#include "echotrain/bytes.hpp"
#include "echotrain/errors.hpp"
#include "echotrain/geometry.hpp"

namespace echotrain::geometry {

namespace detail {

inline TriangleMesh parse_binary_stl(std::span<const std::uint8_t> data, std::uint32_t count)
{
    ByteReader in(data);
    in.raw(80);
    in.u32();
    TriangleMesh mesh;
    mesh.vertices.reserve(std::size_t{3} * count);
    mesh.triangles.reserve(count);
    for (std::uint32_t f = 0; f < count; ++f) {
        for (int c = 0; c < 3; ++c) {
            in.f32();
        }
        std::array<std::uint32_t, 3> tri{};
        for (int k = 0; k < 3; ++k) {
            std::size_t at = in.offset();
            Vec3 v{in.f32(), in.f32(), in.f32()};
            if (!is_finite(v)) {
                throw ParseError("non-finite vertex coordinate in facet " + std::to_string(f), at);
            }
            tri[static_cast<std::size_t>(k)] = static_cast<std::uint32_t>(mesh.vertices.size());
            mesh.vertices.push_back(v);
        }
        in.u16();
        mesh.triangles.push_back(tri);
    }
    return mesh;
}

class AsciiTokens {
public:
    explicit AsciiTokens(std::string_view text) : text_(text) {}

    /// Next whitespace-delimited token; empty at end of input.
    std::string_view next()
    {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            ++pos_;
        }
        start_ = pos_;
        while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            ++pos_;
        }
        return text_.substr(start_, pos_ - start_);
    }

    void expect(std::string_view word)
    {
        auto t = next();
        if (t != word) {
            throw ParseError("expected '" + std::string(word) + "' but found '" + std::string(t) + "'", start_);
        }
    }

    double number()
    {
        auto t = next();
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size() || !std::isfinite(v)) {
            throw ParseError("invalid number '" + std::string(t) + "'", start_);
        }
        return v;
    }

    std::size_t token_offset() const { return start_; }

    void rest_of_line()
    {
        while (pos_ < text_.size() && text_[pos_] != '\n') {
            ++pos_;
        }
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t start_ = 0;
};

inline TriangleMesh parse_ascii_stl(std::string_view text)
{
    AsciiTokens tok(text);
    tok.expect("solid");
    TriangleMesh mesh;
    tok.rest_of_line();
    for (;;) {
        auto t = tok.next();
        if (t.empty()) {
            throw ParseError("missing 'endsolid'", tok.token_offset());
        }
        if (t == "endsolid") {
            break;
        }
        if (t != "facet") {
            throw ParseError("expected 'facet' or 'endsolid' but found '" + std::string(t) + "'", tok.token_offset());
        }
        tok.expect("normal");
        tok.number();
        tok.number();
        tok.number();
        tok.expect("outer");
        tok.expect("loop");
        std::array<std::uint32_t, 3> tri{};
        for (int k = 0; k < 3; ++k) {
            tok.expect("vertex");
            Vec3 v{tok.number(), tok.number(), tok.number()};
            tri[static_cast<std::size_t>(k)] = static_cast<std::uint32_t>(mesh.vertices.size());
            mesh.vertices.push_back(v);
        }
        tok.expect("endloop");
        tok.expect("endfacet");
        mesh.triangles.push_back(tri);
    }
    if (mesh.triangles.empty()) {
        throw ParseError("STL contains zero facets", tok.token_offset());
    }
    return mesh;
}

inline bool looks_like_ascii_stl(std::span<const std::uint8_t> data)
{
    std::string_view text(reinterpret_cast<const char*>(data.data()), data.size());
    auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos || text.substr(first, 5) != "solid") {
        return false;
    }
    return text.find("facet") != std::string_view::npos || text.find("endsolid") != std::string_view::npos;
}

} // namespace detail

/// Parses ASCII or binary STL. Binary is chosen iff the byte length equals
/// 84 + 50 * facet_count; vertices are not welded.
inline TriangleMesh parse_stl(std::span<const std::uint8_t> data, std::string name = {})
{
    TriangleMesh mesh;
    if (data.size() >= 84) {
        ByteReader head(data);
        head.raw(80);
        std::uint32_t count = head.u32();
        if (data.size() == 84 + std::size_t{50} * count) {
            if (count == 0) {
                throw ParseError("STL contains zero facets", 80);
            }
            mesh = detail::parse_binary_stl(data, count);
            mesh.name = std::move(name);
            return mesh;
        }
    }
    if (detail::looks_like_ascii_stl(data)) {
        mesh = detail::parse_ascii_stl(std::string_view(reinterpret_cast<const char*>(data.data()), data.size()));
        mesh.name = std::move(name);
        return mesh;
    }
    if (data.size() < 84) {
        throw ParseError("truncated STL: header needs 84 bytes, file has " + std::to_string(data.size()),
                         data.size());
    }
    ByteReader head(data);
    head.raw(80);
    std::uint32_t count = head.u32();
    std::size_t expected = 84 + std::size_t{50} * count;
    if (data.size() < expected) {
        std::size_t complete = (data.size() - 84) / 50;
        throw ParseError("truncated STL facet data: header declares " + std::to_string(count) + " facets, " +
                             std::to_string(complete) + " complete",
                         84 + complete * 50);
    }
    throw ParseError("malformed STL: " + std::to_string(data.size() - expected) + " trailing bytes after " +
                         std::to_string(count) + " facets",
                     expected);
}

inline Bytes serialize_stl_binary(const TriangleMesh& mesh)
{
    mesh.validate();
    ByteWriter out;
    out.padded("binary STL " + mesh.name, 80);
    out.u32(static_cast<std::uint32_t>(mesh.triangles.size()));
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        Vec3 n = normalized(mesh.face_normal(t));
        out.f32(static_cast<float>(n.x));
        out.f32(static_cast<float>(n.y));
        out.f32(static_cast<float>(n.z));
        for (int k = 0; k < 3; ++k) {
            Vec3 v = mesh.corner(t, k);
            out.f32(static_cast<float>(v.x));
            out.f32(static_cast<float>(v.y));
            out.f32(static_cast<float>(v.z));
        }
        out.u16(0);
    }
    return std::move(out).take();
}

inline std::string serialize_stl_ascii(const TriangleMesh& mesh)
{
    mesh.validate();
    std::ostringstream s;
    s.precision(17);
    std::string name = mesh.name.empty() ? "mesh" : mesh.name;
    s << "solid " << name << "\n";
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        Vec3 n = normalized(mesh.face_normal(t));
        s << "  facet normal " << n.x << ' ' << n.y << ' ' << n.z << "\n    outer loop\n";
        for (int k = 0; k < 3; ++k) {
            Vec3 v = mesh.corner(t, k);
            s << "      vertex " << v.x << ' ' << v.y << ' ' << v.z << "\n";
        }
        s << "    endloop\n  endfacet\n";
    }
    s << "endsolid " << name << "\n";
    return s.str();
}

} // namespace echotrain::geometry
