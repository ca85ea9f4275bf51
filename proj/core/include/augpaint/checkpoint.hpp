#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "augpaint/tensor.hpp"

namespace augpaint {

// Versioned container of named float32 arrays plus a JSON metadata header.
// Layout: magic "AUGPAINT" | u32 format version | u32 meta length | meta JSON
// | u32 array count | per array: u16 name length, name, 4 x u32 dims, data.
struct Checkpoint {
    static constexpr std::uint32_t kFormatVersion = 1;

    nlohmann::json meta;
    std::vector<std::pair<std::string, Tensor>> arrays;

    const Tensor& array(const std::string& name) const;

    // Atomic: writes to a temp file in the same directory, then renames.
    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);
};

// Write text atomically (temp file + rename).
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace augpaint
