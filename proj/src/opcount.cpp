#include "ternet/opcount.hpp"

namespace ternet {

std::string scheme_name(Scheme s) {
    switch (s) {
        case Scheme::Ternary: return "ternary";
        case Scheme::Quaternary2Bit: return "quaternary";
        case Scheme::Float32: return "float";
    }
    return "?";
}

OpCountReport count_ops(Scheme scheme, std::size_t length) {
    OpCountReport r;
    r.scheme = scheme;
    r.length = length;
    const std::uint64_t words = (length + 63) / 64;
    switch (scheme) {
        case Scheme::Ternary:
            // per word: both = p&p, disagree = (s^s)&both, two popcounts,
            // two counter accumulations; then one shift + one subtract to
            // combine the counters at the end
            r.and_ops = 2 * words;
            r.xor_ops = words;
            r.popcount_ops = 2 * words;
            r.add_ops = 2 * words;
            if (length > 0) {
                r.shift_ops = 1;
                r.add_ops += 1;
            }
            break;
        case Scheme::Quaternary2Bit:
            // four plane-pair terms per word, three of them shifted
            r.and_ops = 4 * words;
            r.popcount_ops = 4 * words;
            r.shift_ops = 3 * words;
            r.add_ops = 4 * words;
            break;
        case Scheme::Float32:
            r.add_ops = length;  // multiply-accumulates
            break;
    }
    return r;
}

}  // namespace ternet
