#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fvlab/error.hpp"
#include "fvlab/model.hpp"
#include "fvlab/rng.hpp"

namespace fvlab {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'F', 'V', 'L', 'B'};
constexpr uint32_t kVersion = 1;

json config_to_json(const ModelConfig& cfg) {
    return json{{"n_layers", cfg.n_layers},
                {"n_heads", cfg.n_heads},
                {"d_model", cfg.d_model},
                {"d_head", cfg.d_head},
                {"d_ff", cfg.d_ff},
                {"vocab_size", cfg.vocab_size},
                {"max_seq_len", cfg.max_seq_len},
                {"seed", cfg.seed},
                {"tied_unembedding", cfg.tied_unembedding},
                {"ln_eps", cfg.ln_eps}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.n_layers = j.at("n_layers").get<int>();
    cfg.n_heads = j.at("n_heads").get<int>();
    cfg.d_model = j.at("d_model").get<int>();
    cfg.d_head = j.at("d_head").get<int>();
    cfg.d_ff = j.value("d_ff", 0);
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.max_seq_len = j.at("max_seq_len").get<int>();
    cfg.seed = j.at("seed").get<uint64_t>();
    cfg.tied_unembedding = j.at("tied_unembedding").get<bool>();
    cfg.ln_eps = j.at("ln_eps").get<real>();
    return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const TransformerModel& model, const Vocabulary& vocab) {
    json header;
    header["format"] = "fvlab-checkpoint";
    header["version"] = kVersion;
    header["config"] = config_to_json(model.config());
    header["vocab"] = vocab.words();
    header["frozen"] = model.frozen();
    header["real_bits"] = static_cast<int>(sizeof(real) * 8);
    header["weight_digest"] = to_hex(model.weight_digest());
    json arrays = json::array();
    for (const auto& [name, t] : model.named_parameters()) {
        arrays.push_back({{"name", name}, {"shape", t.shape()}});
    }
    header["arrays"] = std::move(arrays);

    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write checkpoint: " + path);
    const std::string h = header.dump();
    const uint64_t hlen = h.size();
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& [name, t] : model.named_parameters()) {
        out.write(reinterpret_cast<const char*>(t.data().data()),
                  static_cast<std::streamsize>(t.size() * sizeof(real)));
    }
    if (!out) fail(ErrorKind::io, "write failed for checkpoint: " + path);
}

std::pair<TransformerModel, Vocabulary> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::missing_artifact, "checkpoint not found: " + path);
    char magic[4];
    uint32_t version = 0;
    uint64_t hlen = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        fail(ErrorKind::data, "not a checkpoint file: " + path);
    if (version != kVersion)
        fail(ErrorKind::data, "unsupported checkpoint version " + std::to_string(version));
    std::string h(hlen, '\0');
    in.read(h.data(), static_cast<std::streamsize>(hlen));
    json header;
    try {
        header = json::parse(h);
    } catch (const json::exception& e) {
        fail(ErrorKind::data, "corrupt checkpoint header: " + std::string(e.what()));
    }
    if (header.value("real_bits", 64) != static_cast<int>(sizeof(real) * 8))
        fail(ErrorKind::data, "checkpoint precision does not match this build");

    const ModelConfig cfg = config_from_json(header.at("config"));
    TransformerModel model = TransformerModel::init(cfg);
    for (auto& [name, t] : model.named_parameters()) {
        in.read(reinterpret_cast<char*>(t.mutable_data().data()),
                static_cast<std::streamsize>(t.size() * sizeof(real)));
    }
    if (!in) fail(ErrorKind::data, "truncated checkpoint: " + path);
    const std::string want = header.at("weight_digest").get<std::string>();
    if (to_hex(model.weight_digest()) != want)
        fail(ErrorKind::data, "checkpoint digest mismatch: " + path);
    if (header.value("frozen", true)) model.freeze();

    std::vector<std::string> words = header.at("vocab").get<std::vector<std::string>>();
    // first four entries are the structural specials added by Vocabulary::build
    words.erase(words.begin(), words.begin() + 4);
    return {std::move(model), Vocabulary::build(words)};
}

}  // namespace fvlab
