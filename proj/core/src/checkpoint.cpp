#include "dna/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "dna/check.hpp"
#include "json.hpp"

namespace dna {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'D', 'N', 'A', 'C', 'K', 'P', 'T', '1'};
}

Dtype dtype_from_name(const std::string& name) {
    if (name == "f32") return Dtype::F32;
    if (name == "f64") return Dtype::F64;
    DNA_CHECK(false, "checkpoint: unknown dtype '" << name << "'");
    return Dtype::F32;
}

uint64_t fnv1a64(const unsigned char* data, size_t n) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::vector<unsigned char> blob;
    json manifest;
    manifest["meta"] = ckpt.meta;
    json tensors = json::array();
    for (const auto& e : ckpt.entries) {
        json t;
        t["name"] = e.name;
        t["shape"] = e.shape;
        t["dtype"] = dtype_name(e.dtype);
        t["offset"] = blob.size();
        t["bytes"] = e.bytes.size();
        tensors.push_back(std::move(t));
        blob.insert(blob.end(), e.bytes.begin(), e.bytes.end());
    }
    manifest["tensors"] = std::move(tensors);
    std::ostringstream hex;
    hex << std::hex << fnv1a64(blob.data(), blob.size());
    manifest["blob_fnv1a64"] = hex.str();

    const std::string mtext = manifest.dump();
    std::ofstream os(path, std::ios::binary);
    DNA_CHECK(os.good(), "checkpoint: cannot open '" << path << "' for writing");
    os.write(kMagic, sizeof(kMagic));
    const uint64_t mlen = mtext.size();
    os.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
    os.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
    os.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    DNA_CHECK(os.good(), "checkpoint: write to '" << path << "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    DNA_CHECK(is.good(), "checkpoint: cannot open '" << path << "'");
    char magic[8];
    is.read(magic, sizeof(magic));
    DNA_CHECK(is.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
              "checkpoint: '" << path << "' is not a DNACKPT1 file");
    uint64_t mlen = 0;
    is.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
    DNA_CHECK(is.good(), "checkpoint: truncated manifest length in '" << path << "'");
    std::string mtext(mlen, '\0');
    is.read(mtext.data(), static_cast<std::streamsize>(mlen));
    DNA_CHECK(is.good(), "checkpoint: truncated manifest in '" << path << "'");
    std::vector<unsigned char> blob((std::istreambuf_iterator<char>(is)),
                                    std::istreambuf_iterator<char>());

    json manifest;
    try {
        manifest = json::parse(mtext);
    } catch (const json::exception& e) {
        DNA_CHECK(false, "checkpoint: bad manifest in '" << path << "': " << e.what());
    }
    std::ostringstream hex;
    hex << std::hex << fnv1a64(blob.data(), blob.size());
    const std::string expected = manifest.at("blob_fnv1a64").get<std::string>();
    DNA_CHECK(hex.str() == expected, "checkpoint: checksum mismatch in '"
                                         << path << "': blob fnv1a64=" << hex.str()
                                         << " manifest says " << expected);

    Checkpoint ckpt;
    if (manifest.contains("meta")) {
        ckpt.meta = manifest["meta"].get<std::map<std::string, std::string>>();
    }
    for (const auto& t : manifest.at("tensors")) {
        CheckpointEntry e;
        e.name = t.at("name").get<std::string>();
        e.shape = t.at("shape").get<std::vector<int>>();
        e.dtype = dtype_from_name(t.at("dtype").get<std::string>());
        const size_t offset = t.at("offset").get<size_t>();
        const size_t nbytes = t.at("bytes").get<size_t>();
        DNA_CHECK(offset + nbytes <= blob.size(),
                  "checkpoint: tensor '" << e.name << "' extends past blob end");
        e.bytes.assign(blob.begin() + static_cast<std::ptrdiff_t>(offset),
                       blob.begin() + static_cast<std::ptrdiff_t>(offset + nbytes));
        ckpt.entries.push_back(std::move(e));
    }
    return ckpt;
}

}  // namespace dna
