/*
 *    Copyright 2026 The Shadowworlds Authors.
 *
 *    Licensed under the Apache License, Version 2.0 (the "License");
 *    you may not use this file except in compliance with the License.
 *    You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 *    Unless required by applicable law or agreed to in writing, software
 *    distributed under the License is distributed on an "AS IS" BASIS,
 *    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *    See the License for the specific language governing permissions and
 *    limitations under the License.
 */

#include "shadowworlds/trace.hpp"

#include <cstdio>
#include <sstream>

namespace shadowworlds {

std::string hex_u32(uint32_t v) {
    char buf[12];
    std::snprintf(buf, sizeof buf, "0x%08x", v);
    return buf;
}

std::string to_hex(const Bytes& b) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(b.size() * 2);
    for (uint8_t c : b) {
        s += digits[c >> 4];
        s += digits[c & 0xF];
    }
    return s;
}

Bytes from_hex(const std::string& s) {
    if (s.size() % 2 != 0) throw ParseError("hex string has odd length");
    auto nib = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw ParseError("bad hex digit");
    };
    Bytes out(s.size() / 2);
    for (size_t i = 0; i < out.size(); i++)
        out[i] = static_cast<uint8_t>((nib(s[2 * i]) << 4) | nib(s[2 * i + 1]));
    return out;
}

std::string Trace::render() const {
    std::ostringstream os;
    for (const auto& e : events_) {
        os << 'E' << e.index << ' ' << e.name;
        if (!e.fields.empty()) os << ' ' << e.fields;
        os << '\n';
    }
    return os.str();
}

std::string Metrics::render() const {
    std::ostringstream os;
    os << "world_switches=" << world_switches << '\n'
       << "bytes_copied_cross_world=" << bytes_copied_cross_world << '\n'
       << "hash_ops=" << hash_ops << '\n'
       << "ae_ops=" << ae_ops << '\n'
       << "page_zeroizations=" << page_zeroizations << '\n'
       << "page_copies=" << page_copies << '\n'
       << "exceptions_forwarded=" << exceptions_forwarded << '\n'
       << "internal_exceptions=" << internal_exceptions << '\n'
       << "scrub_violations=" << scrub_violations << '\n';
    return os.str();
}

std::string format_fields(std::initializer_list<std::pair<const char*, std::string>> kv) {
    std::string out;
    for (const auto& [k, v] : kv) {
        if (!out.empty()) out += ' ';
        out += k;
        out += '=';
        out += v;
    }
    return out;
}

} // namespace shadowworlds
