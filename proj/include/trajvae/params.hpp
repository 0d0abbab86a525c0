#pragma once

#include <Eigen/Core>
#include <string>
#include <string_view>
#include <vector>

#include "trajvae/errors.hpp"

namespace trajvae {

// Registry of named parameter segments inside one flat vector. Matrices are
// stored column-major; vectors have cols == 1.
struct ParamLayout {
    struct Entry {
        std::string name;
        int offset = 0;
        int rows = 0;
        int cols = 1;
        int size() const { return rows * cols; }
    };

    std::vector<Entry> entries;
    int total = 0;

    int add(const std::string& name, int rows, int cols) {
        entries.push_back(Entry{name, total, rows, cols});
        total += rows * cols;
        return static_cast<int>(entries.size()) - 1;
    }

    int find(std::string_view name) const {
        for (size_t i = 0; i < entries.size(); ++i)
            if (entries[i].name == name) return static_cast<int>(i);
        throw ConfigError("unknown parameter segment: " + std::string(name));
    }

    bool has(std::string_view name) const {
        for (const auto& e : entries)
            if (e.name == name) return true;
        return false;
    }
};

}  // namespace trajvae
