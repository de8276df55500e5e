#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "knw/errors.hpp"

namespace knw {

// One named block inside a flat parameter vector. A weight matrix has
// rows x cols entries stored row-major; a bias or other plain vector has
// cols == 1.
struct LayoutEntry {
  std::string name;
  std::size_t rows = 0, cols = 0;
  std::size_t offset = 0;

  std::size_t count() const { return rows * cols; }
};

// Flat trainable state plus the layout metadata describing how optimisers'
// view (one long vector) maps onto the model's view (weights and biases).
struct ParameterVector {
  std::vector<double> values;
  std::vector<LayoutEntry> layout;

  std::size_t size() const { return values.size(); }

  // Appends a block and returns its offset.
  std::size_t add_block(std::string name, std::size_t rows, std::size_t cols) {
    LayoutEntry e{std::move(name), rows, cols, values.size()};
    values.resize(values.size() + e.count(), 0.0);
    layout.push_back(std::move(e));
    return layout.back().offset;
  }

  const LayoutEntry& find(std::string_view name) const {
    for (const auto& e : layout)
      if (e.name == name) return e;
    throw ContractViolation("parameter block not found: " + std::string(name));
  }

  std::span<double> block(std::string_view name) {
    const auto& e = find(name);
    return {values.data() + e.offset, e.count()};
  }
  std::span<const double> block(std::string_view name) const {
    const auto& e = find(name);
    return {values.data() + e.offset, e.count()};
  }

  // Layout entries must tile the value vector exactly, in order.
  void validate() const {
    std::size_t expect = 0;
    for (const auto& e : layout) {
      if (e.offset != expect)
        throw ContractViolation("parameter layout gap at block " + e.name);
      expect += e.count();
    }
    if (expect != values.size())
      throw ContractViolation("parameter layout does not cover value vector");
  }
};

}  // namespace knw
