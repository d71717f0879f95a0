// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "occ/tape.hpp"

namespace occ::ad {

/// Named learnable tensors, ordered by name so serialization is stable.
class ParamStore {
  public:
    Tensor& add(const std::string& name, Tensor value);
    bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    std::size_t size() const { return tensors_.size(); }
    std::size_t total_numel() const;

    auto begin() { return tensors_.begin(); }
    auto end() { return tensors_.end(); }
    auto begin() const { return tensors_.begin(); }
    auto end() const { return tensors_.end(); }

    /// Merges `other` in; names must not collide.
    void merge(const ParamStore& other);

  private:
    std::map<std::string, Tensor> tensors_;
};

/// Parameters registered as leaves on one tape.
class Bound {
  public:
    Bound(Tape& tape, const ParamStore& store);
    Var operator[](const std::string& name) const;
    /// Rebinds `name` to another node, e.g. a gradcheck input.
    void set(const std::string& name, Var v);
    Tape& tape() const { return *tape_; }
    /// Gradients after tape.backward, keyed like the store.
    std::map<std::string, Tensor> grads() const;

  private:
    Tape* tape_;
    std::map<std::string, Var> vars_;
};

// GOWT: magic "GOWT", u32 count, then per tensor u16 name length, UTF-8 name,
// u8 rank, u32 dims, f64 data; little-endian.
void write_checkpoint(std::ostream& os, const ParamStore& store);
ParamStore read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const ParamStore& store);
ParamStore load_checkpoint(const std::filesystem::path& path);

} // namespace occ::ad
