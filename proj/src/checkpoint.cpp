#include "stenonet/checkpoint.hpp"

#include <bit>
#include <fstream>

#include <json.hpp>

namespace stenonet {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

void save_checkpoint(Graph& graph, const std::string& path) {
    auto tensors = graph.named_tensors();
    nlohmann::json header;
    header["format"] = "stenonet-ckpt-v1";
    header["tensors"] = nlohmann::json::array();
    std::int64_t offset = 0;
    for (auto& [name, t] : tensors) {
        header["tensors"].push_back({{"name", name}, {"shape", t->shape}, {"offset", offset}});
        offset += t->numel() * static_cast<std::int64_t>(sizeof(float));
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << header.dump() << "\n";
    for (auto& [name, t] : tensors)
        out.write(reinterpret_cast<const char*>(t->data.data()),
                  static_cast<std::streamsize>(t->data.size() * sizeof(float)));
    if (!out) throw std::runtime_error("short write on checkpoint: " + path);
}

void load_checkpoint(Graph& graph, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint not found: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint header missing: " + path);
    nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
    if (header.is_discarded() || header.value("format", "") != "stenonet-ckpt-v1")
        throw std::runtime_error("not a stenonet checkpoint: " + path);

    const std::streampos blob_start = in.tellg();
    std::map<std::string, std::pair<std::vector<int>, std::int64_t>> entries;
    for (const auto& e : header.at("tensors"))
        entries[e.at("name").get<std::string>()] = {e.at("shape").get<std::vector<int>>(),
                                                    e.at("offset").get<std::int64_t>()};

    auto tensors = graph.named_tensors();
    if (entries.size() != tensors.size())
        throw std::runtime_error("checkpoint tensor count mismatch for " + path + ": file has " +
                                 std::to_string(entries.size()) + ", graph expects " +
                                 std::to_string(tensors.size()));
    for (auto& [name, t] : tensors) {
        auto it = entries.find(name);
        if (it == entries.end()) throw std::runtime_error("checkpoint missing tensor '" + name + "'");
        if (it->second.first != t->shape)
            throw std::runtime_error("checkpoint shape mismatch for '" + name + "': file " +
                                     shape_str(it->second.first) + ", graph " + shape_str(t->shape));
        in.seekg(blob_start + static_cast<std::streamoff>(it->second.second));
        in.read(reinterpret_cast<char*>(t->data.data()),
                static_cast<std::streamsize>(t->data.size() * sizeof(float)));
        if (!in) throw std::runtime_error("checkpoint truncated while reading '" + name + "'");
    }
}

}  // namespace stenonet
