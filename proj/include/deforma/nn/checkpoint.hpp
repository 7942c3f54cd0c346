#pragma once

// Plain-text checkpoints. Layout, one record per line:
//
//   DEFORMA-CHECKPOINT 1
//   seed <uint64>
//   meta <key> <value>                      (zero or more)
//   layer <description>                     (zero or more, network order)
//   param <name> <constraint> <rank> <d0> ... <d(rank-1)>
//   <value> <value> ...                     (product(dims) hexadecimal floats, C99 %a)
//   ...                                     (one param/value pair per parameter)
//   end
//
// Hexadecimal floats make the round trip bit-exact.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "deforma/common/error.hpp"
#include "deforma/nn/tensor.hpp"

namespace deforma::nn {

struct Checkpoint {
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> meta;
    std::vector<std::string> layers;
    std::vector<Parameter> params;

    std::string meta_value(const std::string& key) const
    {
        for (const auto& [k, v] : meta)
            if (k == key) return v;
        throw ParseError("checkpoint: missing meta key '" + key + "'");
    }
};

inline void write_checkpoint(const Checkpoint& ck, std::ostream& out)
{
    out << "DEFORMA-CHECKPOINT 1\n";
    out << "seed " << ck.seed << '\n';
    for (const auto& [k, v] : ck.meta) out << "meta " << k << ' ' << v << '\n';
    for (const auto& l : ck.layers) out << "layer " << l << '\n';
    char buf[64];
    for (const auto& p : ck.params) {
        out << "param " << p.name << ' ' << constraint_name(p.constraint) << ' ' << p.value.rank();
        for (auto d : p.value.shape()) out << ' ' << d;
        out << '\n';
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%a", p.value[i]);
            out << (i ? " " : "") << buf;
        }
        out << '\n';
    }
    out << "end\n";
}

inline Checkpoint read_checkpoint(std::istream& in)
{
    Checkpoint ck;
    std::string line;
    if (!std::getline(in, line) || line != "DEFORMA-CHECKPOINT 1") throw ParseError("checkpoint: bad header");
    bool ended = false;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "seed") {
            ls >> ck.seed;
        } else if (tag == "meta") {
            std::string key, value;
            ls >> key;
            std::getline(ls >> std::ws, value);
            ck.meta.emplace_back(key, value);
        } else if (tag == "layer") {
            std::string desc;
            std::getline(ls >> std::ws, desc);
            ck.layers.push_back(desc);
        } else if (tag == "param") {
            std::string name, constraint;
            std::size_t rank = 0;
            ls >> name >> constraint >> rank;
            Shape shape(rank);
            for (auto& d : shape) ls >> d;
            if (!ls) throw ParseError("checkpoint: malformed param line '" + line + "'");
            std::string values;
            if (!std::getline(in, values)) throw ParseError("checkpoint: missing values for " + name);
            std::vector<double> data;
            data.reserve(shape_size(shape));
            const char* p = values.c_str();
            while (*p) {
                char* end = nullptr;
                const double v = std::strtod(p, &end);
                if (end == p) break;
                data.push_back(v);
                p = end;
            }
            Parameter param(name, Tensor(shape, std::move(data)), parse_constraint(constraint));
            ck.params.push_back(std::move(param));
        } else if (tag == "end") {
            ended = true;
            break;
        } else if (!tag.empty()) {
            throw ParseError("checkpoint: unknown record '" + tag + "'");
        }
    }
    if (!ended) throw ParseError("checkpoint: truncated file");
    return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write " + path.string());
    write_checkpoint(ck, out);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open " + path.string());
    return read_checkpoint(in);
}

} // namespace deforma::nn
