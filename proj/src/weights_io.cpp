#include "robedit/weights_io.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "robedit/errors.hpp"

namespace robedit {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'C', 'R', 'M', 'L'};

json config_to_json(const ModelConfig& c) {
    return json{{"n_layers", c.n_layers},       {"n_heads", c.n_heads}, {"d_model", c.d_model},
                {"d_ff", c.d_ff},               {"vocab_size", c.vocab_size}, {"max_seq", c.max_seq},
                {"pad_id", c.pad_id},           {"bos_id", c.bos_id},   {"eos_id", c.eos_id}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_seq = j.at("max_seq").get<int>();
    c.pad_id = j.at("pad_id").get<int>();
    c.bos_id = j.at("bos_id").get<int>();
    c.eos_id = j.at("eos_id").get<int>();
    return c;
}

std::vector<std::pair<std::string, Matrix*>> mutable_directory(ModelBundle& b) {
    std::vector<std::pair<std::string, Matrix*>> dir;
    for (const TensorEntry& e : tensor_directory(b)) {
        dir.emplace_back(e.name, const_cast<Matrix*>(e.tensor));
    }
    return dir;
}

// Expected shape of each directory entry, derived from the config.
Matrix make_shaped(const std::string& name, const ModelConfig& c) {
    const int d = c.d_model;
    const int f = c.d_ff;
    if (name == "token_embedding") return Matrix(c.vocab_size, d);
    if (name == "position_embedding") return Matrix(c.max_seq, d);
    if (name == "final_norm") return Matrix(1, d);
    if (name == "unembedding") return Matrix(d, c.vocab_size);
    const auto suffix = name.substr(name.rfind('.') + 1);
    if (suffix == "attn_norm" || suffix == "mlp_norm") return Matrix(1, d);
    if (suffix == "wq" || suffix == "wk" || suffix == "wv" || suffix == "wo") return Matrix(d, d);
    if (suffix == "mlp_up") return Matrix(d, f);
    if (suffix == "mlp_up_bias") return Matrix(1, f);
    if (suffix == "mlp_down") return Matrix(f, d);
    throw FormatError("unknown tensor name: " + name);
}

}  // namespace

void validate_bundle(const ModelBundle& bundle) {
    bundle.config.validate();
    if (bundle.layers.size() != static_cast<size_t>(bundle.config.n_layers)) {
        throw DimensionError("bundle layer count does not match config");
    }
    for (const TensorEntry& e : tensor_directory(bundle)) {
        const Matrix expected = make_shaped(e.name, bundle.config);
        if (e.tensor->rows() != expected.rows() || e.tensor->cols() != expected.cols()) {
            throw DimensionError("tensor " + e.name + " has shape " + std::to_string(e.tensor->rows()) + "x" +
                                 std::to_string(e.tensor->cols()) + ", expected " + std::to_string(expected.rows()) +
                                 "x" + std::to_string(expected.cols()));
        }
        if (!e.tensor->all_finite()) {
            throw NumericError("tensor " + e.name + " contains non-finite values");
        }
    }
}

void save_model(const ModelBundle& bundle, const std::string& path) {
    validate_bundle(bundle);
    json tensors = json::array();
    uint64_t offset = 0;
    const auto dir = tensor_directory(bundle);
    for (const TensorEntry& e : dir) {
        tensors.push_back(json{{"name", e.name},
                               {"rows", e.tensor->rows()},
                               {"cols", e.tensor->cols()},
                               {"offset", offset}});
        offset += e.tensor->data().size() * sizeof(float);
    }
    const json header = json{{"config", config_to_json(bundle.config)}, {"tensors", tensors}};
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path + " for writing");
    }
    out.write(kMagic, 4);
    const uint32_t version = kWeightsFormatVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const uint64_t header_len = header_str.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const TensorEntry& e : dir) {
        out.write(reinterpret_cast<const char*>(e.tensor->data().data()),
                  static_cast<std::streamsize>(e.tensor->data().size() * sizeof(float)));
    }
    if (!out) {
        throw IoError("write failed for " + path);
    }
}

ModelBundle load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError(path + ": bad magic, not a CRML file");
    }
    uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!in || version != kWeightsFormatVersion) {
        throw FormatError(path + ": unsupported format version " + std::to_string(version));
    }
    uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    if (!in || header_len == 0 || header_len > (1u << 26)) {
        throw FormatError(path + ": implausible header length");
    }
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!in) {
        throw FormatError(path + ": truncated header");
    }
    json header;
    try {
        header = json::parse(header_str);
    } catch (const json::exception& e) {
        throw FormatError(path + ": header is not valid JSON: " + e.what());
    }

    ModelBundle bundle;
    try {
        bundle.config = config_from_json(header.at("config"));
    } catch (const json::exception& e) {
        throw FormatError(path + ": bad config block: " + e.what());
    }
    bundle.config.validate();
    bundle.token_embedding = Matrix();
    bundle.layers.resize(static_cast<size_t>(bundle.config.n_layers));

    const std::streampos data_start = in.tellg();
    std::map<std::string, Matrix*> by_name;
    for (auto& [name, tensor] : mutable_directory(bundle)) {
        by_name[name] = tensor;
    }
    const json& tensors = header.at("tensors");
    if (!tensors.is_array() || tensors.size() != by_name.size()) {
        throw FormatError(path + ": tensor directory has wrong entry count");
    }
    for (const json& t : tensors) {
        const std::string name = t.at("name").get<std::string>();
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw FormatError(path + ": unexpected tensor " + name);
        }
        const int rows = t.at("rows").get<int>();
        const int cols = t.at("cols").get<int>();
        const uint64_t offset = t.at("offset").get<uint64_t>();
        Matrix m(rows, cols);
        in.seekg(data_start + static_cast<std::streamoff>(offset));
        in.read(reinterpret_cast<char*>(m.data().data()),
                static_cast<std::streamsize>(m.data().size() * sizeof(float)));
        if (!in) {
            throw FormatError(path + ": truncated payload for tensor " + name);
        }
        *it->second = std::move(m);
    }
    validate_bundle(bundle);
    return bundle;
}

}  // namespace robedit
