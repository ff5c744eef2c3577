#include "modforge/checkpoint.hpp"

#include <limits>

#include "binio.hpp"

namespace modforge {

void save_checkpoint(const std::vector<NamedParam>& params, const std::string& path) {
    detail::BinWriter w(path);
    w.magic("MMF1");
    w.u32(kCheckpointVersion);
    if (params.size() > std::numeric_limits<std::uint32_t>::max())
        throw UsageError("too many parameters for checkpoint");
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        if (p.name.size() > std::numeric_limits<std::uint16_t>::max())
            throw UsageError("parameter name too long: " + p.name);
        const Shape& shape = p.value.shape();
        if (shape.size() > 255) throw UsageError("parameter rank too large: " + p.name);
        w.u16(static_cast<std::uint16_t>(p.name.size()));
        w.str(p.name);
        w.u8(static_cast<std::uint8_t>(shape.size()));
        for (std::size_t d : shape) {
            if (d > std::numeric_limits<std::uint32_t>::max())
                throw UsageError("dimension too large in parameter " + p.name);
            w.u32(static_cast<std::uint32_t>(d));
        }
        for (double v : p.value.values()) w.f64(v);
    }
    w.close();
}

std::vector<NamedParam> load_checkpoint(const std::string& path) {
    detail::BinReader r(path);
    r.expect_magic("MMF1");
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        r.fail("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t count = r.u32("parameter count");
    std::vector<NamedParam> params;
    params.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = r.u16("name length");
        std::string name = r.str(name_len, "parameter name");
        const std::uint8_t rank = r.u8("rank");
        Shape shape(rank);
        std::size_t n = 1;
        for (auto& d : shape) {
            d = r.u32("dimension");
            n *= d;
        }
        std::vector<double> data(n);
        for (double& v : data) v = r.f64("parameter payload");
        params.push_back({std::move(name), Tensor::parameter(std::move(shape), std::move(data))});
    }
    if (!r.at_eof()) r.fail("trailing bytes after last parameter");
    return params;
}

void load_checkpoint_into(std::vector<NamedParam>& params, const std::string& path) {
    std::vector<NamedParam> loaded = load_checkpoint(path);
    if (loaded.size() != params.size()) {
        throw FormatError("'" + path + "': checkpoint has " + std::to_string(loaded.size()) +
                          " parameters, expected " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (loaded[i].name != params[i].name || loaded[i].value.shape() != params[i].value.shape()) {
            throw FormatError("'" + path + "': parameter " + std::to_string(i) + " is '" +
                              loaded[i].name + "' " + shape_str(loaded[i].value.shape()) +
                              ", expected '" + params[i].name + "' " +
                              shape_str(params[i].value.shape()));
        }
        auto src = loaded[i].value.values();
        auto& dst = params[i].value.mutable_values();
        std::copy(src.begin(), src.end(), dst.begin());
    }
}

}  // namespace modforge
