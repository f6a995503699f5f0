#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hyperimage/net.hpp"

namespace hyperimage {

// CSV manifests bind user-prepared image files to labels; paths are relative
// to the manifest's directory.

struct IqaRecord {
    std::string id;
    std::string ref_path;   // resolved absolute-ish path
    std::string dist_path;  // may equal ref_path for pristine rows
    double score = 0.0;
    std::string group;      // reference group key; splits never break groups
};

struct ForgeryRecord {
    std::string id;
    std::string path;
    int label = 0;          // authentic = 1, tampered = 0
    std::string pair_id;    // optional authentic<->tampered link
};

struct ScoreRange {
    double lo = 0.0;
    double hi = 100.0;
};

// header: id,ref_path,dist_path,score,group
std::vector<IqaRecord> load_iqa_manifest(const std::string& path, ScoreRange range = {});

// header: id,path,label,pair_id
std::vector<ForgeryRecord> load_forgery_manifest(const std::string& path);

struct SplitPlan {
    int index = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> train_ids, val_ids, test_ids;
};

// Group-preserving splits: ids sharing a group land in the same partition.
// Sizes use floor for val/test with the remainder to train. Deterministic in
// (seed, split index).
std::vector<SplitPlan> make_splits(const std::vector<std::string>& ids,
                                   const std::vector<std::string>& groups,
                                   std::array<double, 3> fractions, int n_splits, std::uint64_t seed);

// model file: "HPM1", u16 version, u32-length-prefixed canonical spec JSON,
// then float32 little-endian weight/bias blobs in layer order
void save_model(const NetworkSpec& spec, const ModelParams& params, const std::string& path);

struct LoadedModel {
    NetworkSpec spec;
    ModelParams params;
};

LoadedModel load_model(const std::string& path);

// ---- small file helpers shared by the runner ----
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);  // atomic rename
std::string fnv1a64_file(const std::string& path);                          // hex digest
bool file_exists(const std::string& path);

}  // namespace hyperimage
