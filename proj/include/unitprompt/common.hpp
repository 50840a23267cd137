#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace unitprompt {

// Discrete unit ids. Task inputs use ids in [0, v_units); the language model
// additionally reserves three special ids appended after the unit range.
using UnitSequence = std::vector<int>;

struct SpecialTokens {
    int pad;
    int eos;
    int sep;
};

inline SpecialTokens special_tokens(int v_units) {
    if (v_units <= 0) throw std::invalid_argument("special_tokens: v_units must be positive");
    return SpecialTokens{v_units, v_units + 1, v_units + 2};
}

inline int vocab_size(int v_units) { return v_units + 3; }

template <typename... Args>
std::string format_msg(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

inline std::vector<std::string> split_string(const std::string& s, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == delim) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string join_strings(const std::vector<std::string>& parts, const std::string& delim) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += delim;
        out += parts[i];
    }
    return out;
}

}  // namespace unitprompt
