// Cache on disk: manifest.json describes the tree and a blob table;
// params.blob holds length-prefixed little-endian doubles. Stage-0 shards
// share a single blob (they never train), later stages store one blob per
// live shard. Both files are written to temporaries and renamed into place.
#include <fstream>

#include <json.hpp>

#include "shardfl/config.hpp"
#include "shardfl/engine.hpp"

namespace shardfl::engine {

using nlohmann::json;

namespace {

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kBlobName = "params.blob";

std::vector<unsigned char> read_file(const std::filesystem::path& p, CacheError::Kind kind) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw CacheError(kind, "cannot open " + p.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_atomic(const std::filesystem::path& p, const void* data, std::size_t len) {
    auto tmp = p;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CacheError(CacheError::Kind::Io, "cannot write " + tmp.string());
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
        if (!out) throw CacheError(CacheError::Kind::Io, "short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, p, ec);
    if (ec)
        throw CacheError(CacheError::Kind::Io,
                         "cannot move " + tmp.string() + " into place: " + ec.message());
}

struct BlobRecord {
    std::uint64_t offset;
    std::uint64_t count;
    std::string digest;
};

const json& member(const json& obj, const char* key) {
    if (!obj.contains(key))
        throw CacheError(CacheError::Kind::Schema,
                         std::string("manifest: missing key '") + key + "'");
    return obj.at(key);
}

}  // namespace

void save_cache(const ShardTree& tree, const std::filesystem::path& dir) {
    if (tree.stages.empty()) throw InvalidInputError("save_cache: empty tree");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw CacheError(CacheError::Kind::Io, "cannot create " + dir.string());

    std::vector<unsigned char> blob_bytes;
    std::vector<BlobRecord> blobs;
    auto push_blob = [&](const ParamVector& v) {
        BlobRecord rec;
        rec.offset = blob_bytes.size();
        rec.count = v.size();
        std::vector<unsigned char> record;
        append_u64_le(record, v.size());
        for (double x : v) append_f64_le(record, x);
        rec.digest = to_hex(fnv1a64(record.data(), record.size()));
        blob_bytes.insert(blob_bytes.end(), record.begin(), record.end());
        blobs.push_back(rec);
        return static_cast<int>(blobs.size()) - 1;
    };

    // Shared stage-0 blob. Every live singleton holds the same initial model.
    const ParamVector* theta0 = nullptr;
    for (const auto& n : tree.stages[0]) {
        if (n.dropped) continue;
        if (!theta0) {
            theta0 = &n.theta_final;
        } else if (n.theta_final != *theta0) {
            throw InvalidInputError("save_cache: stage-0 shards disagree on the initial model");
        }
    }
    if (!theta0) throw InvalidInputError("save_cache: no live stage-0 shard");
    int theta0_blob = push_blob(*theta0);

    json stages = json::array();
    for (std::size_t p = 0; p < tree.stages.size(); ++p) {
        json stage = json::array();
        for (const auto& n : tree.stages[p]) {
            int blob = -1;
            if (!n.dropped) blob = (p == 0) ? theta0_blob : push_blob(n.theta_final);
            stage.push_back(json{
                {"index", n.index},
                {"clients", n.clients},
                {"children", n.children},
                {"weight", n.weight},
                {"rounds", n.rounds},
                {"alpha", n.alpha},
                {"alpha_signed", n.alpha_signed},
                {"dropped", n.dropped},
                {"blob", blob},
            });
        }
        stages.push_back(std::move(stage));
    }

    json blob_table = json::array();
    for (const auto& b : blobs)
        blob_table.push_back(json{{"offset", b.offset}, {"count", b.count}, {"digest", b.digest}});

    json alphas = json::array();
    for (const auto& [cid, entry] : tree.client_alphas)
        alphas.push_back(json::array({cid, entry.alpha, entry.stage}));

    json manifest = {
        {"format_version", kCacheFormatVersion},
        {"merge_rate", tree.merge_rate},
        {"num_stages", tree.num_stages},
        {"config_digest", tree.config_digest},
        {"counted_client_rounds", tree.counted_client_rounds},
        {"run", config::run_config_json(tree.config)},
        {"data", config::data_config_json(tree.data_config)},
        {"client_alphas", std::move(alphas)},
        {"stages", std::move(stages)},
        {"blobs", std::move(blob_table)},
    };

    write_file_atomic(dir / kBlobName, blob_bytes.data(), blob_bytes.size());
    std::string text = manifest.dump(2);
    text.push_back('\n');
    write_file_atomic(dir / kManifestName, text.data(), text.size());
}

ShardTree load_cache(const std::filesystem::path& dir) {
    auto manifest_bytes = read_file(dir / kManifestName, CacheError::Kind::Io);
    json manifest;
    try {
        manifest = json::parse(manifest_bytes.begin(), manifest_bytes.end());
    } catch (const json::exception& e) {
        throw CacheError(CacheError::Kind::Schema,
                         std::string("manifest is not valid JSON: ") + e.what());
    }

    try {
        int version = member(manifest, "format_version").get<int>();
        if (version != kCacheFormatVersion)
            throw CacheError(CacheError::Kind::VersionMismatch,
                             "cache format_version " + std::to_string(version) +
                                 " (expected " + std::to_string(kCacheFormatVersion) + ")");

        ShardTree tree;
        tree.merge_rate = member(manifest, "merge_rate").get<int>();
        tree.num_stages = member(manifest, "num_stages").get<int>();
        tree.config_digest = member(manifest, "config_digest").get<std::string>();
        tree.counted_client_rounds = member(manifest, "counted_client_rounds").get<long long>();
        try {
            tree.config = config::run_config_from_json(member(manifest, "run"));
            tree.data_config = config::data_config_from_json(member(manifest, "data"));
        } catch (const ConfigError& e) {
            throw CacheError(CacheError::Kind::Schema,
                             std::string("embedded config invalid: ") + e.what());
        }
        if (config::config_digest_of(tree.config, tree.data_config) != tree.config_digest)
            throw CacheError(CacheError::Kind::DigestMismatch,
                             "config digest does not match the embedded configuration");

        for (const auto& entry : member(manifest, "client_alphas")) {
            if (!entry.is_array() || entry.size() != 3)
                throw CacheError(CacheError::Kind::Schema, "bad client_alphas entry");
            tree.client_alphas[entry[0].get<int>()] =
                ContributionEntry{entry[1].get<double>(), entry[2].get<int>()};
        }

        std::vector<BlobRecord> blobs;
        for (const auto& b : member(manifest, "blobs"))
            blobs.push_back(BlobRecord{member(b, "offset").get<std::uint64_t>(),
                                       member(b, "count").get<std::uint64_t>(),
                                       member(b, "digest").get<std::string>()});

        auto blob_bytes = read_file(dir / kBlobName, CacheError::Kind::Io);
        auto load_blob = [&](int idx) {
            const auto& rec = blobs.at(static_cast<std::size_t>(idx));
            std::uint64_t need = 8 + rec.count * 8;
            if (rec.offset + need > blob_bytes.size())
                throw CacheError(CacheError::Kind::Truncated,
                                 "blob " + std::to_string(idx) + " extends past end of file");
            const unsigned char* base = blob_bytes.data() + rec.offset;
            if (read_u64_le(base) != rec.count)
                throw CacheError(CacheError::Kind::Truncated,
                                 "blob " + std::to_string(idx) + " length prefix mismatch");
            if (to_hex(fnv1a64(base, need)) != rec.digest)
                throw CacheError(CacheError::Kind::DigestMismatch,
                                 "blob " + std::to_string(idx) + " digest mismatch");
            ParamVector v(rec.count);
            for (std::uint64_t i = 0; i < rec.count; ++i)
                v[i] = read_f64_le(base + 8 + i * 8);
            return v;
        };

        const json& stages = member(manifest, "stages");
        if (static_cast<int>(stages.size()) != tree.num_stages + 1)
            throw CacheError(CacheError::Kind::Schema, "stage count disagrees with num_stages");
        for (std::size_t p = 0; p < stages.size(); ++p) {
            std::vector<ShardNode> stage;
            for (const auto& rec : stages[p]) {
                ShardNode n;
                n.stage = static_cast<int>(p);
                n.index = member(rec, "index").get<int>();
                n.clients = member(rec, "clients").get<std::vector<int>>();
                n.children = member(rec, "children").get<std::vector<int>>();
                n.weight = member(rec, "weight").get<double>();
                n.rounds = member(rec, "rounds").get<int>();
                n.alpha = member(rec, "alpha").get<double>();
                n.alpha_signed = member(rec, "alpha_signed").get<double>();
                n.dropped = member(rec, "dropped").get<bool>();
                int blob = member(rec, "blob").get<int>();
                if (!n.dropped) {
                    if (blob < 0 || blob >= static_cast<int>(blobs.size()))
                        throw CacheError(CacheError::Kind::Schema,
                                         "live shard references blob " + std::to_string(blob));
                    n.theta_final = load_blob(blob);
                }
                stage.push_back(std::move(n));
            }
            tree.stages.push_back(std::move(stage));
        }

        // Initial models are derived, not stored: stage 0 shares the final
        // model (nothing trains there), later stages re-average children.
        for (auto& n : tree.stages[0])
            if (!n.dropped) n.theta_init = n.theta_final;
        for (std::size_t p = 1; p < tree.stages.size(); ++p) {
            const auto& prev = tree.stages[p - 1];
            for (auto& n : tree.stages[p]) {
                if (n.dropped) continue;
                std::vector<const ShardNode*> kids;
                for (int ci : n.children) {
                    const auto& child = prev.at(static_cast<std::size_t>(ci));
                    if (!child.dropped) kids.push_back(&child);
                }
                n.theta_init = init_super_shard(kids);
            }
        }
        return tree;
    } catch (const json::exception& e) {
        throw CacheError(CacheError::Kind::Schema,
                         std::string("manifest field has wrong type: ") + e.what());
    }
}

std::size_t cache_blob_count(const std::filesystem::path& dir) {
    auto manifest_bytes = read_file(dir / kManifestName, CacheError::Kind::Io);
    json manifest;
    try {
        manifest = json::parse(manifest_bytes.begin(), manifest_bytes.end());
        return member(manifest, "blobs").size();
    } catch (const json::exception& e) {
        throw CacheError(CacheError::Kind::Schema,
                         std::string("manifest is not valid JSON: ") + e.what());
    }
}

}  // namespace shardfl::engine
