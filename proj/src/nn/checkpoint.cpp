#include "mgt/nn/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "mgt/io.hpp"

namespace mgt::nn {

namespace {

constexpr std::array<char, 4> kMagic{'M', 'G', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_param(std::ostream& out, const Parameter<float>& p) {
    if (p.name.size() > 0xffff) throw std::invalid_argument("parameter name too long: " + p.name);
    bin::put<std::uint16_t>(out, static_cast<std::uint16_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const auto& shape = p.value.shape();
    bin::put<std::uint8_t>(out, static_cast<std::uint8_t>(shape.size()));
    for (std::size_t d : shape) bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(float)));
}

std::string read_string(std::istream& in, std::size_t n) {
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw InputError("unexpected end of file");
    return s;
}

Parameter<float> get_param(std::istream& in) {
    const auto name_len = bin::get<std::uint16_t>(in);
    std::string name = read_string(in, name_len);
    const auto rank = bin::get<std::uint8_t>(in);
    if (rank > 2) throw InputError("parameter " + name + " has unsupported rank " + std::to_string(rank));
    std::vector<std::size_t> shape;
    for (std::uint8_t i = 0; i < rank; ++i) shape.push_back(bin::get<std::uint32_t>(in));
    Tensor<float> value(shape);
    in.read(reinterpret_cast<char*>(value.data()), static_cast<std::streamsize>(value.size() * sizeof(float)));
    if (!in) throw InputError("unexpected end of file in parameter " + name);
    if (!value.all_finite()) throw InputError("parameter " + name + " contains non-finite values");
    return Parameter<float>(std::move(name), std::move(value));
}

}  // namespace

std::string with_model_layout(const std::string& config_json, const ModelConfig& cfg) {
    auto j = config_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(config_json);
    j["in_dim"] = cfg.in_dim;
    j["hidden_size"] = cfg.hidden;
    j["num_layers"] = cfg.layers;
    j["decoder_layers"] = cfg.decoder_layers;
    j["heads"] = cfg.resolved_heads();
    return j.dump();
}

ModelConfig model_layout(const std::string& config_json) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(config_json);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("checkpoint config is not valid JSON: ") + e.what());
    }
    ModelConfig cfg;
    try {
        cfg.in_dim = j.at("in_dim").get<std::size_t>();
        cfg.hidden = j.at("hidden_size").get<std::size_t>();
        cfg.layers = j.at("num_layers").get<std::size_t>();
        cfg.decoder_layers = j.at("decoder_layers").get<std::size_t>();
        cfg.heads = j.at("heads").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("checkpoint config lacks model layout: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    std::ostringstream out(std::ios::binary);
    out.write(kMagic.data(), 4);
    bin::put<std::uint32_t>(out, kVersion);
    bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.config_json.size()));
    out.write(ckpt.config_json.data(), static_cast<std::streamsize>(ckpt.config_json.size()));
    const auto params = ckpt.model.parameters();
    bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size() + ckpt.extra.size()));
    for (const auto* p : params) put_param(out, *p);
    for (const auto& p : ckpt.extra) put_param(out, p);
    return out.str();
}

Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& origin) {
    std::istringstream in(bytes, std::ios::binary);
    try {
        bin::expect_magic(in, kMagic, origin);
        const auto version = bin::get<std::uint32_t>(in);
        if (version != kVersion) throw InputError("unsupported checkpoint version " + std::to_string(version));
        Checkpoint ckpt;
        ckpt.config_json = read_string(in, bin::get<std::uint32_t>(in));
        const ModelConfig cfg = model_layout(ckpt.config_json);
        const auto count = bin::get<std::uint32_t>(in);
        std::map<std::string, Parameter<float>> loaded;
        for (std::uint32_t i = 0; i < count; ++i) {
            Parameter<float> p = get_param(in);
            if (loaded.count(p.name)) throw InputError("duplicate parameter " + p.name);
            std::string name = p.name;
            loaded.emplace(std::move(name), std::move(p));
        }
        if (in.peek() != std::char_traits<char>::eof()) throw InputError("trailing bytes after last parameter");

        Rng unused(0);
        ckpt.model = ModelParams<float>::init(cfg, unused);
        bool decoders_present = true;
        for (const auto* p : ckpt.model.parameters()) {
            if (p->name.rfind("feat_decoder.", 0) == 0 || p->name.rfind("struct_decoder.", 0) == 0 ||
                p->name == "mask_token") {
                if (!loaded.count(p->name)) decoders_present = false;
            }
        }
        if (!decoders_present) ckpt.model.strip_decoders();
        for (auto* p : ckpt.model.parameters()) {
            auto it = loaded.find(p->name);
            if (it == loaded.end()) throw InputError("missing parameter " + p->name);
            if (it->second.value.shape() != p->value.shape()) {
                throw InputError("parameter " + p->name + " has shape " + it->second.value.shape_string() +
                                 ", expected " + p->value.shape_string());
            }
            p->value = std::move(it->second.value);
            p->zero_grad();
            loaded.erase(it);
        }
        for (auto& [name, p] : loaded) {
            p.zero_grad();
            ckpt.extra.push_back(std::move(p));
        }
        return ckpt;
    } catch (const InputError& e) {
        throw InputError(origin + ": " + e.what());
    }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open checkpoint " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_checkpoint(buf.str(), path.string());
}

}  // namespace mgt::nn
