#include "sv/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sv/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "weight file writer assumes a little-endian host");

namespace sv {

using nlohmann::json;

nlohmann::json config_to_json(const ModelConfig& cfg) {
    json kinds = json::array();
    for (LayerKind k : cfg.layer_kinds)
        kinds.push_back(k == LayerKind::dense ? "dense" : "moe");
    return json{{"num_layers", cfg.num_layers},
                {"hidden", cfg.hidden},
                {"ffn_hidden", cfg.ffn_hidden},
                {"num_query_heads", cfg.num_query_heads},
                {"num_kv_heads", cfg.num_kv_heads},
                {"head_dim", cfg.head_dim},
                {"vocab", cfg.vocab},
                {"layer_kinds", kinds},
                {"num_experts", cfg.num_experts},
                {"active_experts", cfg.active_experts},
                {"expert_hidden", cfg.expert_hidden},
                {"block_size", cfg.block_size},
                {"rope_base", cfg.rope_base}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    static const char* known[] = {
        "num_layers",   "hidden",        "ffn_hidden",  "num_query_heads",
        "num_kv_heads", "head_dim",      "vocab",       "layer_kinds",
        "num_experts",  "active_experts", "expert_hidden", "block_size",
        "rope_base"};
    for (const auto& [key, val] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError("model config: unknown field " + key);
    }
    ModelConfig cfg;
    cfg.num_layers = j.value("num_layers", cfg.num_layers);
    cfg.hidden = j.value("hidden", cfg.hidden);
    cfg.ffn_hidden = j.value("ffn_hidden", cfg.ffn_hidden);
    cfg.num_query_heads = j.value("num_query_heads", cfg.num_query_heads);
    cfg.num_kv_heads = j.value("num_kv_heads", cfg.num_kv_heads);
    cfg.head_dim = j.value("head_dim", cfg.head_dim);
    cfg.vocab = j.value("vocab", cfg.vocab);
    cfg.num_experts = j.value("num_experts", cfg.num_experts);
    cfg.active_experts = j.value("active_experts", cfg.active_experts);
    cfg.expert_hidden = j.value("expert_hidden", cfg.expert_hidden);
    cfg.block_size = j.value("block_size", cfg.block_size);
    cfg.rope_base = j.value("rope_base", cfg.rope_base);
    if (j.contains("layer_kinds")) {
        for (const auto& k : j.at("layer_kinds")) {
            const std::string s = k.get<std::string>();
            if (s == "dense")
                cfg.layer_kinds.push_back(LayerKind::dense);
            else if (s == "moe")
                cfg.layer_kinds.push_back(LayerKind::moe);
            else
                throw ConfigError("model config: layer kind must be dense|moe, got " + s);
        }
    }
    cfg.validate();
    return cfg;
}

nlohmann::json anchors_to_json(const AnchorSet& a) {
    return json{{"num_layers", a.num_layers}, {"anchors", a.anchors}};
}

AnchorSet anchors_from_json(const nlohmann::json& j) {
    AnchorSet a;
    a.num_layers = j.at("num_layers").get<int>();
    a.anchors = j.at("anchors").get<std::vector<int>>();
    a.validate();
    return a;
}

nlohmann::json thresholds_to_json(const ThresholdMap& m) {
    json layers = json::object();
    for (const auto& [layer, beta] : m.layer_beta)
        layers[std::to_string(layer)] = beta;
    return json{{"k", m.k}, {"calib_tokens", m.calib_tokens}, {"layers", layers}};
}

ThresholdMap thresholds_from_json(const nlohmann::json& j) {
    ThresholdMap m;
    m.k = j.at("k").get<int>();
    m.calib_tokens = j.value("calib_tokens", 0LL);
    for (const auto& [key, beta] : j.at("layers").items()) {
        std::size_t used = 0;
        int layer = 0;
        try {
            layer = std::stoi(key, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != key.size() || layer < 0)
            throw InputError("threshold map: bad layer key " + key);
        m.layer_beta[layer] = beta.get<std::vector<double>>();
    }
    m.validate();
    return m;
}

void save_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw InputError("failed writing " + path);
}

nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError(path + ": " + e.what());
    }
}

namespace {

constexpr char kMagic[4] = {'S', 'V', 'W', 'T'};

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path, const char* what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw InputError(path + ": truncated reading " + what);
    return v;
}

std::uint64_t numel_of(const std::vector<int>& shape) {
    std::uint64_t n = 1;
    for (int s : shape) n *= std::uint64_t(s);
    return n;
}

} // namespace

void save_weights(const std::string& path, const Weights& w) {
    w.config.validate();
    json dir = json::array();
    std::uint64_t offset = 0;
    for_each_tensor(w, [&](const std::string& name, const std::vector<float>& data,
                           std::vector<int> shape) {
        dir.push_back(json{{"name", name}, {"shape", shape}, {"offset", offset}});
        (void)data;
        offset += numel_of(shape) * sizeof(float);
    });
    const json header{{"config", config_to_json(w.config)}, {"tensors", dir}};
    const std::string header_bytes = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open " + path + " for writing");
    out.write(kMagic, 4);
    write_pod<std::uint32_t>(out, kWeightFormatVersion);
    write_pod<std::uint64_t>(out, header_bytes.size());
    out.write(header_bytes.data(), std::streamsize(header_bytes.size()));
    for_each_tensor(w, [&](const std::string&, const std::vector<float>& data,
                           std::vector<int>) {
        out.write(reinterpret_cast<const char*>(data.data()),
                  std::streamsize(data.size() * sizeof(float)));
    });
    if (!out) throw InputError("failed writing " + path);
}

std::shared_ptr<Weights> load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw InputError(path + ": not a weight file (bad magic)");
    const auto version = read_pod<std::uint32_t>(in, path, "version");
    if (version != kWeightFormatVersion)
        throw InputError(path + ": unsupported format version " +
                         std::to_string(version));
    const auto header_len = read_pod<std::uint64_t>(in, path, "header length");
    std::string header_bytes(header_len, '\0');
    in.read(header_bytes.data(), std::streamsize(header_len));
    if (!in) throw InputError(path + ": truncated reading header");

    json header;
    try {
        header = json::parse(header_bytes);
    } catch (const json::parse_error& e) {
        throw InputError(path + ": header: " + e.what());
    }
    const ModelConfig cfg = config_from_json(header.at("config"));
    const json& dir = header.at("tensors");

    std::string payload((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());

    auto w = std::make_shared<Weights>(zero_weights(cfg));
    std::size_t idx = 0;
    std::uint64_t offset = 0;
    for_each_tensor(*w, [&](const std::string& name, std::vector<float>& data,
                            std::vector<int> shape) {
        if (idx >= dir.size())
            throw InputError(path + ": header is missing tensor " + name);
        const json& e = dir[idx];
        const std::string e_name = e.at("name").get<std::string>();
        if (e_name != name)
            throw InputError(path + ": tensor " + std::to_string(idx) +
                             " is " + e_name + ", expected " + name);
        const auto e_shape = e.at("shape").get<std::vector<int>>();
        if (numel_of(e_shape) != data.size() || e_shape != shape) {
            std::ostringstream msg;
            msg << path << ": tensor " << name << ": header shape [";
            for (std::size_t i = 0; i < e_shape.size(); ++i)
                msg << (i ? "x" : "") << e_shape[i];
            msg << "] does not match expected [";
            for (std::size_t i = 0; i < shape.size(); ++i)
                msg << (i ? "x" : "") << shape[i];
            msg << "]";
            throw InputError(msg.str());
        }
        if (e.at("offset").get<std::uint64_t>() != offset)
            throw InputError(path + ": tensor " + name +
                             ": offsets are not contiguous");
        const std::uint64_t bytes = data.size() * sizeof(float);
        if (offset + bytes > payload.size())
            throw InputError(path + ": truncated payload at tensor " + name +
                             ": need " + std::to_string(offset + bytes) +
                             " bytes, file has " + std::to_string(payload.size()));
        std::memcpy(data.data(), payload.data() + offset, bytes);
        offset += bytes;
        ++idx;
    });
    if (idx != dir.size())
        throw InputError(path + ": header lists " + std::to_string(dir.size()) +
                         " tensors, model has " + std::to_string(idx));
    if (offset != payload.size())
        throw InputError(path + ": payload is " + std::to_string(payload.size()) +
                         " bytes, directory covers " + std::to_string(offset));
    return w;
}

std::vector<std::vector<int>> parse_prompts(std::istream& in) {
    std::vector<std::vector<int>> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::vector<int> seq;
        std::string word;
        while (ls >> word) {
            std::size_t used = 0;
            int id = 0;
            try {
                id = std::stoi(word, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != word.size() || id < 0)
                throw InputError("prompts line " + std::to_string(line_no) +
                                 ": bad token id " + word);
            seq.push_back(id);
        }
        if (!seq.empty()) out.push_back(std::move(seq));
    }
    return out;
}

std::vector<std::vector<int>> load_prompts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    return parse_prompts(in);
}

std::uint64_t fnv1a_hash(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace sv
