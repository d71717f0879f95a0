// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include "occ/params.hpp"

#include <fstream>

#include "occ/binio.hpp"
#include "occ/error.hpp"

namespace occ::ad {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
    require(!contains(name), "duplicate parameter name: " + name);
    return tensors_.emplace(name, std::move(value)).first->second;
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) {
        throw ContractError("unknown parameter: " + name);
    }
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) {
        throw ContractError("unknown parameter: " + name);
    }
    return it->second;
}

std::size_t ParamStore::total_numel() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors_) {
        n += t.numel();
    }
    return n;
}

void ParamStore::merge(const ParamStore& other) {
    for (const auto& [name, t] : other) {
        add(name, t);
    }
}

Bound::Bound(Tape& tape, const ParamStore& store) : tape_(&tape) {
    for (const auto& [name, t] : store) {
        vars_.emplace(name, tape.leaf(t));
    }
}

Var Bound::operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) {
        throw ContractError("parameter not bound: " + name);
    }
    return it->second;
}

void Bound::set(const std::string& name, Var v) {
    auto it = vars_.find(name);
    require(it != vars_.end(), "unknown parameter: " + name);
    require(v.shape() == it->second.shape(), "parameter rebind changes the shape of " + name);
    it->second = v;
}

std::map<std::string, Tensor> Bound::grads() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, v] : vars_) {
        out.emplace(name, tape_->grad(v));
    }
    return out;
}

void write_checkpoint(std::ostream& os, const ParamStore& store) {
    binio::put_magic(os, "GOWT");
    binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(store.size()));
    for (const auto& [name, t] : store) {
        require(name.size() <= 0xFFFF, "parameter name too long: " + name);
        binio::put_uint<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        binio::put_uint<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
        for (auto d : t.shape()) {
            binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(d));
        }
        for (double v : t.data()) {
            binio::put_f64(os, v);
        }
    }
}

ParamStore read_checkpoint(std::istream& is) {
    binio::expect_magic(is, "GOWT");
    const auto count = binio::get_uint<std::uint32_t>(is, "GOWT tensor count");
    ParamStore store;
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto len = binio::get_uint<std::uint16_t>(is, "GOWT name length");
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) {
            throw DataError("truncated GOWT name");
        }
        const auto rank = binio::get_uint<std::uint8_t>(is, "GOWT rank");
        if (rank == 0) {
            throw DataError("GOWT tensor " + name + " has rank 0");
        }
        Shape shape(rank);
        for (auto& d : shape) {
            d = binio::get_uint<std::uint32_t>(is, "GOWT dim");
            if (d == 0) {
                throw DataError("GOWT tensor " + name + " has a zero dim");
            }
        }
        std::vector<double> data(numel_of(shape));
        for (auto& v : data) {
            v = binio::get_f64(is, "GOWT data");
        }
        if (store.contains(name)) {
            throw DataError("GOWT duplicate tensor " + name);
        }
        store.add(name, Tensor(shape, std::move(data)));
    }
    return store;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw DataError("cannot open for writing: " + path.string());
    }
    write_checkpoint(os, store);
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("cannot open: " + path.string());
    }
    return read_checkpoint(is);
}

} // namespace occ::ad
