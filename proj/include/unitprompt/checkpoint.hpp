#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "prompt.hpp"
#include "quantizer.hpp"
#include "ulm.hpp"

namespace unitprompt {

inline uint64_t fnv1a64(const unsigned char* data, size_t n) {
    uint64_t h = 14695981039346656037ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= uint64_t(data[i]);
        h *= 1099511628211ULL;
    }
    return h;
}

namespace detail {

inline void store_f32_le(float x, std::string& out) {
    uint32_t bits;
    std::memcpy(&bits, &x, sizeof(bits));
    out.push_back(char(bits & 0xFF));
    out.push_back(char((bits >> 8) & 0xFF));
    out.push_back(char((bits >> 16) & 0xFF));
    out.push_back(char((bits >> 24) & 0xFF));
}

inline float load_f32_le(const unsigned char* p) {
    uint32_t bits = uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) |
                    (uint32_t(p[3]) << 24);
    float x;
    std::memcpy(&x, &bits, sizeof(x));
    return x;
}

inline std::string hex64(uint64_t x) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(x));
    return std::string(buf);
}

}  // namespace detail

// In-memory form of a checkpoint: a kind tag, ordered metadata, and named
// float tensors in manifest order.
struct Checkpoint {
    std::string kind;
    std::vector<std::pair<std::string, std::string>> meta;
    std::vector<std::pair<std::string, std::vector<float>>> tensors;

    const std::string& meta_value(const std::string& key) const {
        for (const auto& [k, v] : meta)
            if (k == key) return v;
        throw std::invalid_argument(format_msg("checkpoint: missing meta key '", key, "'"));
    }

    int meta_int(const std::string& key) const { return std::stoi(meta_value(key)); }

    const std::vector<float>& tensor(const std::string& name) const {
        for (const auto& [n, v] : tensors)
            if (n == name) return v;
        throw std::invalid_argument(format_msg("checkpoint: missing tensor '", name, "'"));
    }
};

// Writes atomically: temp file in the target directory, then rename. Layout
// is a text manifest followed by one raw little-endian float32 payload:
//
//   unitprompt-checkpoint v1
//   kind <kind>
//   meta <key> <value>
//   tensor <name> <numel> <byte offset>
//   checksum <16 hex digits of fnv1a64(payload)>
//   payload <byte count>
//   <payload bytes>
inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
    require(!c.kind.empty(), "save_checkpoint: checkpoint has no kind");
    std::string payload;
    std::ostringstream manifest;
    manifest << "unitprompt-checkpoint v1\n";
    manifest << "kind " << c.kind << "\n";
    for (const auto& [k, v] : c.meta) {
        require(k.find(' ') == std::string::npos, "save_checkpoint: meta key contains a space");
        manifest << "meta " << k << " " << v << "\n";
    }
    for (const auto& [name, values] : c.tensors) {
        require(!values.empty(), format_msg("save_checkpoint: tensor '", name, "' is empty"));
        require(name.find(' ') == std::string::npos,
                "save_checkpoint: tensor name contains a space");
        manifest << "tensor " << name << " " << values.size() << " " << payload.size() << "\n";
        for (float x : values) detail::store_f32_le(x, payload);
    }
    uint64_t checksum =
        fnv1a64(reinterpret_cast<const unsigned char*>(payload.data()), payload.size());
    manifest << "checksum " << detail::hex64(checksum) << "\n";
    manifest << "payload " << payload.size() << "\n";

    std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    std::filesystem::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), format_msg("save_checkpoint: cannot open '", tmp.string(), "'"));
        out << manifest.str();
        out.write(payload.data(), long(payload.size()));
        require(out.good(), format_msg("save_checkpoint: write failed for '", tmp.string(), "'"));
    }
    std::filesystem::rename(tmp, target);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), format_msg("load_checkpoint: cannot open '", path, "'"));
    std::string line;
    require(std::getline(in, line) && line == "unitprompt-checkpoint v1",
            format_msg("load_checkpoint: '", path, "' is not a v1 checkpoint"));

    Checkpoint c;
    struct Entry {
        std::string name;
        size_t numel, offset;
    };
    std::vector<Entry> entries;
    uint64_t declared_checksum = 0;
    size_t payload_bytes = 0;
    bool saw_payload = false;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "kind") {
            ls >> c.kind;
        } else if (tag == "meta") {
            std::string k, v;
            ls >> k >> v;
            c.meta.emplace_back(k, v);
        } else if (tag == "tensor") {
            Entry e;
            ls >> e.name >> e.numel >> e.offset;
            require(!ls.fail(), format_msg("load_checkpoint: bad tensor line '", line, "'"));
            entries.push_back(e);
        } else if (tag == "checksum") {
            std::string hex;
            ls >> hex;
            declared_checksum = std::stoull(hex, nullptr, 16);
        } else if (tag == "payload") {
            ls >> payload_bytes;
            require(!ls.fail(), "load_checkpoint: bad payload line");
            saw_payload = true;
            break;
        } else {
            throw std::invalid_argument(
                format_msg("load_checkpoint: unknown manifest line '", line, "'"));
        }
    }
    require(saw_payload, "load_checkpoint: manifest has no payload line");
    require(!c.kind.empty(), "load_checkpoint: manifest has no kind line");

    std::string payload(payload_bytes, '\0');
    in.read(payload.data(), long(payload_bytes));
    require(size_t(in.gcount()) == payload_bytes, "load_checkpoint: truncated payload");
    require(in.peek() == std::char_traits<char>::eof(),
            format_msg("load_checkpoint: '", path, "' has bytes after the declared payload"));
    uint64_t checksum =
        fnv1a64(reinterpret_cast<const unsigned char*>(payload.data()), payload.size());
    require(checksum == declared_checksum,
            format_msg("load_checkpoint: checksum mismatch in '", path, "'"));

    size_t expect_offset = 0;
    for (const auto& e : entries) {
        require(e.offset == expect_offset,
                format_msg("load_checkpoint: tensor '", e.name, "' offset ", e.offset,
                           " is not contiguous-ascending"));
        require(e.offset + e.numel * 4 <= payload_bytes,
                format_msg("load_checkpoint: tensor '", e.name, "' overruns the payload"));
        std::vector<float> values(e.numel);
        const auto* base = reinterpret_cast<const unsigned char*>(payload.data()) + e.offset;
        for (size_t i = 0; i < e.numel; ++i) values[i] = detail::load_f32_le(base + 4 * i);
        c.tensors.emplace_back(e.name, std::move(values));
        expect_offset += e.numel * 4;
    }
    require(expect_offset == payload_bytes, "load_checkpoint: payload has trailing bytes");
    return c;
}

inline uint64_t checkpoint_checksum(const Checkpoint& c) {
    std::string payload;
    for (const auto& [name, values] : c.tensors) {
        payload += name;
        payload.push_back('\0');
        for (float x : values) detail::store_f32_le(x, payload);
    }
    return fnv1a64(reinterpret_cast<const unsigned char*>(payload.data()), payload.size());
}

// --- adapters ---------------------------------------------------------------

inline Checkpoint checkpoint_of(const ULM<float>& m) {
    Checkpoint c;
    c.kind = "ulm";
    c.meta = {{"L", std::to_string(m.config.L)},         {"d", std::to_string(m.config.d)},
              {"h", std::to_string(m.config.h)},         {"d_ff", std::to_string(m.config.d_ff)},
              {"v_units", std::to_string(m.config.v_units)},
              {"t_max", std::to_string(m.config.t_max)}};
    for (const auto& [name, t] : m.named) c.tensors.emplace_back(name, t->v);
    return c;
}

inline ULM<float> ulm_from_checkpoint(const Checkpoint& c) {
    require(c.kind == "ulm", format_msg("ulm_from_checkpoint: kind is '", c.kind, "'"));
    ULMConfig cfg;
    cfg.L = c.meta_int("L");
    cfg.d = c.meta_int("d");
    cfg.h = c.meta_int("h");
    cfg.d_ff = c.meta_int("d_ff");
    cfg.v_units = c.meta_int("v_units");
    cfg.t_max = c.meta_int("t_max");
    ULM<float> m = ulm_init<float>(cfg, 0);
    require(m.named.size() == c.tensors.size(),
            format_msg("ulm_from_checkpoint: expected ", m.named.size(), " tensors, found ",
                       c.tensors.size()));
    for (size_t i = 0; i < m.named.size(); ++i) {
        require(m.named[i].first == c.tensors[i].first,
                format_msg("ulm_from_checkpoint: tensor ", i, " is '", c.tensors[i].first,
                           "', expected '", m.named[i].first, "'"));
        require(m.named[i].second->v.size() == c.tensors[i].second.size(),
                format_msg("ulm_from_checkpoint: size mismatch for '", c.tensors[i].first, "'"));
        m.named[i].second->v = c.tensors[i].second;
    }
    m.set_trainable(false);
    return m;
}

inline Checkpoint checkpoint_of(const PromptSet<float>& p) {
    Checkpoint c;
    c.kind = "prompts";
    c.meta = {{"mode", prompt_mode_name(p.mode)},
              {"l", std::to_string(p.l)},
              {"d", std::to_string(int(p.input_prompts->cols()))},
              {"L", std::to_string(int(p.key_prompts.size()))}};
    for (const auto& t : p.param_list()) c.tensors.emplace_back(t->name, t->v);
    return c;
}

inline PromptSet<float> prompts_from_checkpoint(const Checkpoint& c) {
    require(c.kind == "prompts", format_msg("prompts_from_checkpoint: kind is '", c.kind, "'"));
    PromptSet<float> p;
    p.mode = prompt_mode_from(c.meta_value("mode"));
    p.l = c.meta_int("l");
    int d = c.meta_int("d");
    int L = c.meta_int("L");
    require(p.l >= 1 && d >= 1, "prompts_from_checkpoint: bad dimensions");
    auto take = [&](const std::string& name) {
        const auto& v = c.tensor(name);
        require(int(v.size()) == p.l * d,
                format_msg("prompts_from_checkpoint: tensor '", name, "' has ", v.size(),
                           " values, expected ", p.l * d));
        return make_tensor<float>({p.l, d}, v, true, name);
    };
    p.input_prompts = take("prompt.input");
    if (p.mode == PromptMode::deep) {
        require(L >= 1, "prompts_from_checkpoint: deep prompts need L >= 1");
        for (int i = 0; i < L; ++i) {
            p.key_prompts.push_back(take(format_msg("prompt.key.", i)));
            p.value_prompts.push_back(take(format_msg("prompt.value.", i)));
        }
    }
    return p;
}

inline Checkpoint checkpoint_of(const Codebook& cb) {
    Checkpoint c;
    c.kind = "codebook";
    c.meta = {{"k", std::to_string(cb.k)}, {"d_f", std::to_string(cb.d_f)}};
    c.tensors.emplace_back("centroids", cb.centroids);
    return c;
}

inline Codebook codebook_from_checkpoint(const Checkpoint& c) {
    require(c.kind == "codebook", format_msg("codebook_from_checkpoint: kind is '", c.kind, "'"));
    Codebook cb;
    cb.k = c.meta_int("k");
    cb.d_f = c.meta_int("d_f");
    cb.centroids = c.tensor("centroids");
    require(int(cb.centroids.size()) == cb.k * cb.d_f,
            "codebook_from_checkpoint: centroid payload size mismatch");
    return cb;
}

}  // namespace unitprompt
