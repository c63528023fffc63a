#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rectdiff/tensor.hpp"

namespace rectdiff {

// Self-describing binary container used for checkpoints and datasets:
// magic, version, string metadata, then a table of named typed arrays
// (64-bit little-endian payloads). Round trips are bit-exact.
struct ContainerEntry {
    std::string name;
    std::string kind;
    std::vector<uint64_t> dims;
    bool is_f64 = true;
    std::vector<double> f64;
    std::vector<uint64_t> u64;
};

class Container {
public:
    static constexpr uint32_t kVersion = 1;

    explicit Container(std::string artifact = "") : artifact_(std::move(artifact)) {}

    const std::string& artifact() const { return artifact_; }

    void set_meta(const std::string& key, const std::string& value) { meta_[key] = value; }
    bool has_meta(const std::string& key) const { return meta_.count(key) != 0; }
    const std::string& meta_at(const std::string& key) const;
    const std::map<std::string, std::string>& meta() const { return meta_; }

    void add_tensor(const std::string& name, const std::string& kind, const Tensor& t);
    void add_f64(const std::string& name, const std::string& kind, std::vector<double> data);
    void add_u64(const std::string& name, const std::string& kind, std::vector<uint64_t> data);

    const ContainerEntry* find(const std::string& name) const;
    const ContainerEntry& at(const std::string& name) const;
    Tensor tensor(const std::string& name, bool requires_grad = false) const;

    const std::vector<ContainerEntry>& entries() const { return entries_; }

    void save(const std::string& path) const;
    // expected_artifact, when nonempty, must match the stored artifact kind.
    static Container load(const std::string& path, const std::string& expected_artifact = "");

private:
    std::string artifact_;
    std::map<std::string, std::string> meta_;
    std::vector<ContainerEntry> entries_;
};

}  // namespace rectdiff
