#include "trajvae/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace trajvae {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'T', 'V', 'C', 'K'};
constexpr std::uint32_t kContainerVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw ValidationError("checkpoint file is truncated");
    return v;
}

json config_json(const ModelConfig& c) {
    json j;
    j["d_state"] = c.d_state;
    j["d_action"] = c.d_action;
    j["d_latent"] = c.d_latent;
    j["encoder_hidden"] = c.encoder_hidden;
    j["attention_dim"] = c.attention_dim;
    j["dynamics_arch"] = to_string(c.dynamics_arch);
    j["mixture_components"] = c.mixture_components;
    j["log_std_clamp"] = {c.log_std_min, c.log_std_max};
    j["with_aux_posterior"] = c.with_aux_posterior;
    return j;
}

ModelConfig config_from(const json& j) {
    ModelConfig c;
    try {
        c.d_state = j.at("d_state").get<int>();
        c.d_action = j.at("d_action").get<int>();
        c.d_latent = j.at("d_latent").get<int>();
        c.encoder_hidden = j.at("encoder_hidden").get<int>();
        c.attention_dim = j.at("attention_dim").get<int>();
        c.dynamics_arch = dynamics_arch_from_string(j.at("dynamics_arch").get<std::string>());
        c.mixture_components = j.at("mixture_components").get<int>();
        c.log_std_min = j.at("log_std_clamp").at(0).get<double>();
        c.log_std_max = j.at("log_std_clamp").at(1).get<double>();
        c.with_aux_posterior = j.at("with_aux_posterior").get<bool>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed model_config: ") + e.what());
    }
    c.validate();
    return c;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) { return config_json(config).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
    try {
        return config_from(json::parse(text));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("model_config is not valid JSON: ") + e.what());
    }
}

void save_checkpoint(const std::string& path, const ModelBundle& bundle) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open checkpoint file for writing: " + path);

    json header;
    header["format_version"] = bundle.format_version;
    header["model_config"] = config_json(bundle.config);
    header["seed"] = bundle.seed;
    const std::string htext = header.dump();

    out.write(kMagic, 4);
    write_pod(out, kContainerVersion);
    write_pod(out, static_cast<std::uint64_t>(htext.size()));
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));

    write_pod(out, static_cast<std::uint64_t>(bundle.layout.entries.size()));
    for (const auto& e : bundle.layout.entries) {
        write_pod(out, static_cast<std::uint32_t>(e.name.size()));
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_pod(out, static_cast<std::uint64_t>(e.size()));
        out.write(reinterpret_cast<const char*>(bundle.params.data() + e.offset),
                  static_cast<std::streamsize>(e.size() * sizeof(double)));
    }
    if (!out) throw ValidationError("failed writing checkpoint: " + path);
}

ModelBundle load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint file: " + path);

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw ValidationError("not a checkpoint file: " + path);
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kContainerVersion)
        throw ValidationError("unsupported checkpoint container version");

    const auto hlen = read_pod<std::uint64_t>(in);
    std::string htext(hlen, '\0');
    in.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw ValidationError("checkpoint header is truncated");

    ModelBundle bundle;
    try {
        const json header = json::parse(htext);
        bundle.format_version = header.at("format_version").get<int>();
        bundle.config = config_from(header.at("model_config"));
        bundle.seed = header.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed checkpoint header: ") + e.what());
    }
    bundle.layout = build_layout(bundle.config);
    bundle.params.resize(bundle.layout.total);

    const auto n_arrays = read_pod<std::uint64_t>(in);
    if (n_arrays != bundle.layout.entries.size())
        throw ValidationError("checkpoint parameter arrays do not match the model config");
    for (const auto& e : bundle.layout.entries) {
        const auto name_len = read_pod<std::uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto count = read_pod<std::uint64_t>(in);
        if (!in || name != e.name || count != static_cast<std::uint64_t>(e.size()))
            throw ValidationError("checkpoint array '" + name + "' does not match layout entry '" +
                                  e.name + "'");
        in.read(reinterpret_cast<char*>(bundle.params.data() + e.offset),
                static_cast<std::streamsize>(e.size() * sizeof(double)));
        if (!in) throw ValidationError("checkpoint array data truncated");
    }
    return bundle;
}

}  // namespace trajvae
