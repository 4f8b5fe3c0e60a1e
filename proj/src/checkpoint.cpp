#include "vocaldiff/checkpoint.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "vocaldiff/binio.hpp"

namespace vocaldiff {

namespace {

constexpr std::uint32_t kVersion = 1;

std::string exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) {
        throw FormatError("config: bad value for " + key + ": \"" + v + "\"");
    }
    return out;
}

template <typename U>
U parse_int(const std::string& key, const std::string& v) {
    U out{};
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) {
        throw FormatError("config: bad value for " + key + ": \"" + v + "\"");
    }
    return out;
}

} // namespace

std::string config_text(const UNetConfig& u, const TrainConfig& t) {
    std::ostringstream os;
    os << "in_channels=" << u.in_channels << "\n"
       << "width_mult=" << u.width_mult.str() << "\n"
       << "groups=" << u.groups << "\n"
       << "length=" << u.length << "\n"
       << "heads=" << u.heads << "\n"
       << "window=" << u.window << "\n"
       << "lr=" << exact(t.lr) << "\n"
       << "batch=" << t.batch << "\n"
       << "timesteps=" << t.T << "\n"
       << "cond_dropout=" << exact(t.cond_dropout) << "\n"
       << "guidance_scale=" << exact(t.guidance_scale) << "\n"
       << "seed=" << t.seed << "\n"
       << "steps=" << t.steps << "\n"
       << "validation_fraction=" << exact(t.validation_fraction) << "\n"
       << "weight_decay=" << exact(t.weight_decay) << "\n"
       << "eval_every=" << t.eval_every << "\n"
       << "patience=" << t.patience << "\n"
       << "lr_floor_ratio=" << exact(t.lr_floor_ratio) << "\n";
    return os.str();
}

void parse_config_text(const std::string& text, UNetConfig& u, TrainConfig& t) {
    using Setter = std::function<void(const std::string&, const std::string&)>;
    const std::map<std::string, Setter> setters{
        {"in_channels", [&](auto& k, auto& v) { u.in_channels = parse_int<std::size_t>(k, v); }},
        {"width_mult", [&](auto&, auto& v) { u.width_mult = Rational::parse(v); }},
        {"groups", [&](auto& k, auto& v) { u.groups = parse_int<std::size_t>(k, v); }},
        {"length", [&](auto& k, auto& v) { u.length = parse_int<std::size_t>(k, v); }},
        {"heads", [&](auto& k, auto& v) { u.heads = parse_int<std::size_t>(k, v); }},
        {"window", [&](auto& k, auto& v) { u.window = parse_int<std::size_t>(k, v); }},
        {"lr", [&](auto& k, auto& v) { t.lr = parse_double(k, v); }},
        {"batch", [&](auto& k, auto& v) { t.batch = parse_int<std::size_t>(k, v); }},
        {"timesteps", [&](auto& k, auto& v) { t.T = parse_int<int>(k, v); }},
        {"cond_dropout", [&](auto& k, auto& v) { t.cond_dropout = parse_double(k, v); }},
        {"guidance_scale", [&](auto& k, auto& v) { t.guidance_scale = parse_double(k, v); }},
        {"seed", [&](auto& k, auto& v) { t.seed = parse_int<std::uint64_t>(k, v); }},
        {"steps", [&](auto& k, auto& v) { t.steps = parse_int<long long>(k, v); }},
        {"validation_fraction",
         [&](auto& k, auto& v) { t.validation_fraction = parse_double(k, v); }},
        {"weight_decay", [&](auto& k, auto& v) { t.weight_decay = parse_double(k, v); }},
        {"eval_every", [&](auto& k, auto& v) { t.eval_every = parse_int<long long>(k, v); }},
        {"patience", [&](auto& k, auto& v) { t.patience = parse_int<int>(k, v); }},
        {"lr_floor_ratio", [&](auto& k, auto& v) { t.lr_floor_ratio = parse_double(k, v); }},
    };
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError("config: line " + std::to_string(lineno) + " has no '='");
        }
        const std::string key = line.substr(0, eq);
        auto it = setters.find(key);
        if (it == setters.end()) {
            throw FormatError("config: unknown key \"" + key + "\" on line " +
                              std::to_string(lineno));
        }
        try {
            it->second(key, line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw FormatError(std::string("config: ") + e.what());
        }
    }
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    binio::Writer w;
    w.bytes("VDIF", 4);
    w.le(kVersion);
    const std::string cfg = config_text(ckpt.unet, ckpt.train);
    w.le(static_cast<std::uint32_t>(cfg.size()));
    w.bytes(cfg.data(), cfg.size());
    w.le(static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& [name, t] : ckpt.params) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max() || t.rank() > 255) {
            throw ContractError("checkpoint: tensor \"" + name + "\" cannot be encoded");
        }
        w.le(static_cast<std::uint16_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.le(static_cast<std::uint8_t>(t.rank()));
        for (auto d : t.shape()) {
            w.le(static_cast<std::uint32_t>(d));
        }
        for (float v : t.data()) {
            w.f32(v);
        }
    }
    w.le(ckpt.step);
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    binio::Reader r(bytes, "VDIF");
    r.magic("VDIF");
    const std::size_t vpos = r.offset();
    const auto version = r.le<std::uint32_t>("version");
    if (version != kVersion) {
        r.fail("unsupported version " + std::to_string(version), vpos);
    }
    const auto cfg_len = r.le<std::uint32_t>("config length");
    Checkpoint ckpt;
    parse_config_text(r.text(cfg_len, "config text"), ckpt.unet, ckpt.train);
    const auto count = r.le<std::uint32_t>("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t at = r.offset();
        const auto name_len = r.le<std::uint16_t>("tensor name length");
        std::string name = r.text(name_len, "tensor name");
        const auto ndim = r.le<std::uint8_t>("tensor rank");
        Shape shape;
        for (std::uint8_t d = 0; d < ndim; ++d) {
            shape.push_back(r.le<std::uint32_t>("tensor dim"));
        }
        auto data = r.f32s(shape_numel(shape), "tensor data");
        if (!ckpt.params.emplace(name, Tensor(shape, std::move(data))).second) {
            r.fail("duplicate tensor \"" + name + "\"", at);
        }
    }
    ckpt.step = r.le<std::uint64_t>("step");
    r.finish();
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    binio::write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    auto bytes = binio::read_file(path);
    try {
        return decode_checkpoint(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace vocaldiff
