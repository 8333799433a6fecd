#pragma once

// Named parameter storage shared by model construction, the optimizer and the
// checkpoint code.  Modules keep integer indices into the store; before each
// forward the store is bound to a tape, producing one leaf Var per entry in
// store order.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "wsr/graph.hpp"
#include "wsr/tensor.hpp"

namespace wsr {

template <typename T>
class ParamStore {
  public:
    struct Entry {
        std::string name;
        Tensor<T> value;
    };

    int add(std::string name, Tensor<T> value) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        index_[name] = static_cast<int>(entries_.size());
        entries_.push_back(Entry{std::move(name), std::move(value)});
        return static_cast<int>(entries_.size()) - 1;
    }

    std::size_t count() const { return entries_.size(); }
    Entry& entry(int i) { return entries_.at(static_cast<std::size_t>(i)); }
    const Entry& entry(int i) const { return entries_.at(static_cast<std::size_t>(i)); }
    const std::vector<Entry>& entries() const { return entries_; }

    int find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? -1 : it->second;
    }

    std::int64_t total_params() const {
        std::int64_t n = 0;
        for (const auto& e : entries_) n += e.value.size();
        return n;
    }

  private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, int> index_;
};

// Leaf vars for every store entry, in store order, on one tape.
template <typename T>
struct Binding {
    std::vector<Var> vars;
    Var operator[](int idx) const {
        if (idx < 0 || idx >= static_cast<int>(vars.size()))
            throw DimensionError("parameter binding index out of range");
        return vars[static_cast<std::size_t>(idx)];
    }
};

template <typename T>
Binding<T> bind_params(Graph<T>& g, const ParamStore<T>& store, bool requires_grad) {
    Binding<T> b;
    b.vars.reserve(static_cast<std::size_t>(store.count()));
    for (const auto& e : store.entries()) b.vars.push_back(g.leaf(e.value, requires_grad));
    return b;
}

// Uniform in [-sqrt(1/fan_in), sqrt(1/fan_in)], the init rule used for every
// learned weight tensor here.
template <typename T>
Tensor<T> fanin_uniform(Shape shape, std::int64_t fan_in, Pcg32& rng) {
    if (fan_in < 1) throw ConfigError("fanin_uniform: fan_in must be positive");
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    return uniform_tensor<T>(std::move(shape), rng, -bound, bound);
}

}  // namespace wsr
