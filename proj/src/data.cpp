#include "hyperimage/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "hyperimage/rng.hpp"

namespace fs = std::filesystem;

namespace hyperimage {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

std::vector<std::string> read_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("manifest: cannot open " + path);
    std::vector<std::string> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        rows.push_back(line);
    }
    if (rows.empty()) fail("manifest: " + path + " is empty");
    return rows;
}

std::string resolve(const std::string& manifest_path, const std::string& rel) {
    const fs::path p(rel);
    if (p.is_absolute()) return rel;
    return (fs::path(manifest_path).parent_path() / p).string();
}

double parse_score(const std::string& s, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) fail("");
        return v;
    } catch (...) {
        fail("manifest: bad score '" + s + "' at " + where);
    }
}

void write_u16(std::ostream& out, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint16_t read_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    if (!in) fail("model file: truncated");
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) fail("model file: truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32_blob(std::ostream& out, const RealTensor& t) {
    std::vector<unsigned char> buf(t.numel() * 4);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        const float f = static_cast<float>(t[i]);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        buf[i * 4] = static_cast<unsigned char>(bits);
        buf[i * 4 + 1] = static_cast<unsigned char>(bits >> 8);
        buf[i * 4 + 2] = static_cast<unsigned char>(bits >> 16);
        buf[i * 4 + 3] = static_cast<unsigned char>(bits >> 24);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void read_f32_blob(std::istream& in, RealTensor& t) {
    std::vector<unsigned char> buf(t.numel() * 4);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) fail("model file: truncated weights");
    for (std::size_t i = 0; i < t.numel(); ++i) {
        const std::uint32_t bits = static_cast<std::uint32_t>(buf[i * 4]) |
                                   (static_cast<std::uint32_t>(buf[i * 4 + 1]) << 8) |
                                   (static_cast<std::uint32_t>(buf[i * 4 + 2]) << 16) |
                                   (static_cast<std::uint32_t>(buf[i * 4 + 3]) << 24);
        float f;
        std::memcpy(&f, &bits, 4);
        t[i] = static_cast<double>(f);
    }
}

}  // namespace

std::vector<IqaRecord> load_iqa_manifest(const std::string& path, ScoreRange range) {
    const auto rows = read_rows(path);
    if (rows[0] != "id,ref_path,dist_path,score,group")
        fail("manifest: " + path + " does not carry the iqa header");
    std::vector<IqaRecord> records;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].empty()) continue;
        const auto cells = split_csv_row(rows[i]);
        const std::string where = path + ":" + std::to_string(i + 1);
        if (cells.size() != 5) fail("manifest: malformed row at " + where);
        IqaRecord r;
        r.id = cells[0];
        r.ref_path = resolve(path, cells[1]);
        r.dist_path = resolve(path, cells[2]);
        r.score = parse_score(cells[3], where);
        r.group = cells[4];
        if (r.id.empty() || r.group.empty()) fail("manifest: empty id or group at " + where);
        if (r.score < range.lo || r.score > range.hi)
            fail("manifest: score " + cells[3] + " outside [" + std::to_string(range.lo) + "," +
                 std::to_string(range.hi) + "] at " + where);
        if (!file_exists(r.ref_path)) fail("manifest: missing file " + r.ref_path + " at " + where);
        if (!file_exists(r.dist_path)) fail("manifest: missing file " + r.dist_path + " at " + where);
        records.push_back(std::move(r));
    }
    if (records.empty()) fail("manifest: " + path + " has no records");
    return records;
}

std::vector<ForgeryRecord> load_forgery_manifest(const std::string& path) {
    const auto rows = read_rows(path);
    if (rows[0] != "id,path,label,pair_id")
        fail("manifest: " + path + " does not carry the forgery header");
    std::vector<ForgeryRecord> records;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].empty()) continue;
        const auto cells = split_csv_row(rows[i]);
        const std::string where = path + ":" + std::to_string(i + 1);
        if (cells.size() != 4) fail("manifest: malformed row at " + where);
        ForgeryRecord r;
        r.id = cells[0];
        r.path = resolve(path, cells[1]);
        if (cells[2] != "0" && cells[2] != "1") fail("manifest: label must be 0 or 1 at " + where);
        r.label = cells[2] == "1" ? 1 : 0;
        r.pair_id = cells[3];
        if (r.id.empty()) fail("manifest: empty id at " + where);
        if (!file_exists(r.path)) fail("manifest: missing file " + r.path + " at " + where);
        records.push_back(std::move(r));
    }
    if (records.empty()) fail("manifest: " + path + " has no records");

    // a pair id must link exactly one authentic and one tampered record
    std::map<std::string, std::pair<int, int>> pair_counts;  // (authentic, tampered)
    for (const auto& r : records) {
        if (r.pair_id.empty()) continue;
        auto& c = pair_counts[r.pair_id];
        (r.label == 1 ? c.first : c.second) += 1;
    }
    for (const auto& [pid, c] : pair_counts)
        if (c.first != 1 || c.second != 1)
            fail("manifest: pair id '" + pid + "' does not link exactly one record of each label");
    return records;
}

std::vector<SplitPlan> make_splits(const std::vector<std::string>& ids,
                                   const std::vector<std::string>& groups,
                                   std::array<double, 3> fractions, int n_splits, std::uint64_t seed) {
    if (ids.size() != groups.size()) fail("make_splits: ids and groups length mismatch");
    if (ids.empty()) fail("make_splits: no records");
    const double fsum = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(fsum - 1.0) > 1e-9) fail("make_splits: fractions must sum to 1");

    // stable group order: first appearance
    std::vector<std::string> group_names;
    std::map<std::string, std::vector<std::string>> members;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto it = members.find(groups[i]);
        if (it == members.end()) {
            group_names.push_back(groups[i]);
            members[groups[i]] = {ids[i]};
        } else {
            it->second.push_back(ids[i]);
        }
    }
    const std::size_t g = group_names.size();
    std::size_t partitions = 0;
    for (double f : fractions)
        if (f > 0.0) ++partitions;
    if (g < partitions) fail("make_splits: fewer groups than partitions");

    std::vector<SplitPlan> plans;
    for (int s = 0; s < n_splits; ++s) {
        SplitPlan plan;
        plan.index = s;
        plan.seed = seed;
        std::vector<std::string> order = group_names;
        Rng rng(hash_combine(seed, static_cast<std::uint64_t>(s)));
        rng.shuffle(order);

        const std::size_t n_val = static_cast<std::size_t>(std::floor(fractions[1] * static_cast<double>(g)));
        const std::size_t n_test = static_cast<std::size_t>(std::floor(fractions[2] * static_cast<double>(g)));
        const std::size_t n_train = g - n_val - n_test;

        for (std::size_t i = 0; i < g; ++i) {
            auto& dst = i < n_train ? plan.train_ids : (i < n_train + n_val ? plan.val_ids : plan.test_ids);
            for (const auto& id : members[order[i]]) dst.push_back(id);
        }
        plans.push_back(std::move(plan));
    }
    return plans;
}

void save_model(const NetworkSpec& spec, const ModelParams& params, const std::string& path) {
    const std::string spec_json = spec_to_json(spec);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail("model file: cannot write " + tmp);
        out.write("HPM1", 4);
        write_u16(out, 1);
        write_u32(out, static_cast<std::uint32_t>(spec_json.size()));
        out.write(spec_json.data(), static_cast<std::streamsize>(spec_json.size()));
        for (const auto& l : params.layers) {
            if (!l.present) continue;
            write_f32_blob(out, l.weights);
            write_f32_blob(out, l.bias);
        }
        if (!out) fail("model file: write failed for " + tmp);
    }
    fs::rename(tmp, path);
}

LoadedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("model file: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::strncmp(magic, "HPM1", 4) != 0) fail("model file: bad magic in " + path);
    const std::uint16_t version = read_u16(in);
    if (version != 1) fail("model file: unsupported version " + std::to_string(version));
    const std::uint32_t spec_len = read_u32(in);
    std::string spec_json(spec_len, '\0');
    in.read(spec_json.data(), spec_len);
    if (static_cast<std::uint32_t>(in.gcount()) != spec_len) fail("model file: truncated spec block");

    LoadedModel m;
    m.spec = spec_from_json(spec_json);
    Network net(m.spec);  // validates shapes; sizes every weight tensor
    m.params = net.init_params(0);
    for (auto& l : m.params.layers) {
        if (!l.present) continue;
        read_f32_blob(in, l.weights);
        read_f32_blob(in, l.bias);
    }
    char extra;
    if (in.read(&extra, 1)) fail("model file: trailing bytes in " + path);
    return m;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail("cannot write " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) fail("write failed for " + tmp);
    }
    fs::rename(tmp, path);
}

std::string fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open " + path);
    std::uint64_t h = 14695981039346656037ull;
    char buf[8192];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (got < static_cast<std::streamsize>(sizeof(buf))) break;
    }
    std::ostringstream os;
    os << std::hex;
    for (int shift = 60; shift >= 0; shift -= 4) os << ((h >> shift) & 0xF);
    return os.str();
}

bool file_exists(const std::string& path) { return fs::exists(path); }

}  // namespace hyperimage
