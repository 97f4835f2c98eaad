#include "tcdrguard/safetensors.hpp"

#include "tcdrguard/common.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace tcdr::model {

void save_safetensors(const std::string& path, const std::map<std::string, const Mat*>& tensors) {
    nlohmann::json header;
    size_t offset = 0;
    for (const auto& [name, mat] : tensors) {
        const size_t bytes = mat->size() * sizeof(float);
        header[name] = {{"dtype", "F32"},
                        {"shape", {mat->rows, mat->cols}},
                        {"data_offsets", {offset, offset + bytes}}};
        offset += bytes;
    }
    std::string head = header.dump();
    // Pad to 8-byte alignment with spaces, as the format allows.
    while (head.size() % 8 != 0) head += ' ';

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    const uint64_t head_len = head.size();
    out.write(reinterpret_cast<const char*>(&head_len), 8);
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (const auto& [name, mat] : tensors)
        out.write(reinterpret_cast<const char*>(mat->data()),
                  static_cast<std::streamsize>(mat->size() * sizeof(float)));
    if (!out) throw DataError("write failed for '" + path + "'");
}

std::map<std::string, Mat> load_safetensors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open tensor file '" + path + "'");
    uint64_t head_len = 0;
    in.read(reinterpret_cast<char*>(&head_len), 8);
    if (!in || head_len == 0 || head_len > (1ull << 24))
        throw DataError("corrupt tensor file header in '" + path + "'");
    std::string head(head_len, '\0');
    in.read(head.data(), static_cast<std::streamsize>(head_len));
    nlohmann::json header = nlohmann::json::parse(head);

    std::map<std::string, Mat> tensors;
    const std::streampos data_start = in.tellg();
    for (const auto& [name, meta] : header.items()) {
        if (name == "__metadata__") continue;
        if (meta.at("dtype") != "F32")
            throw DataError("unsupported dtype for tensor '" + name + "'");
        const auto shape = meta.at("shape").get<std::vector<int64_t>>();
        if (shape.size() != 2) throw DataError("tensor '" + name + "' is not 2-D");
        Mat m(static_cast<int>(shape[0]), static_cast<int>(shape[1]));
        const auto offs = meta.at("data_offsets").get<std::vector<uint64_t>>();
        if (offs.size() != 2 || offs[1] - offs[0] != m.size() * sizeof(float))
            throw DataError("offset mismatch for tensor '" + name + "'");
        in.seekg(data_start + static_cast<std::streamoff>(offs[0]));
        in.read(reinterpret_cast<char*>(m.data()),
                static_cast<std::streamsize>(m.size() * sizeof(float)));
        if (!in) throw DataError("truncated tensor data for '" + name + "'");
        tensors.emplace(name, std::move(m));
    }
    return tensors;
}

} // namespace tcdr::model
