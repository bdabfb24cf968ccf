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

#include "shadowworlds/guest.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace shadowworlds {

namespace sysno {

const char* name(uint32_t num) {
    switch (num) {
        case kExit: return "_exit";
        case kRead: return "read";
        case kWrite: return "write";
        case kOpen: return "open";
        case kClose: return "close";
        case kGetpid: return "getpid";
        case kBrk: return "brk";
        case kMunmap: return "munmap";
        case kRtSigreturn: return "rt_sigreturn";
        case kRtSigaction: return "rt_sigaction";
        case kMmap2: return "mmap";
        case kFutex: return "futex";
        case kTzExecve: return "tz_execve";
        default: return "unknown";
    }
}

std::optional<uint32_t> from_name(const std::string& s) {
    static const std::map<std::string, uint32_t> table = {
        {"exit", kExit},         {"_exit", kExit},
        {"read", kRead},         {"write", kWrite},
        {"open", kOpen},         {"close", kClose},
        {"getpid", kGetpid},     {"brk", kBrk},
        {"munmap", kMunmap},     {"rt_sigreturn", kRtSigreturn},
        {"sigreturn", kRtSigreturn},
        {"rt_sigaction", kRtSigaction},
        {"sigaction", kRtSigaction},
        {"mmap", kMmap2},        {"mmap2", kMmap2},
        {"futex", kFutex},       {"tz_execve", kTzExecve},
    };
    auto it = table.find(s);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

} // namespace sysno

// ---------------------------------------------------------------------------
// Instruction codec
// ---------------------------------------------------------------------------

namespace {

void put_u16(Bytes& b, uint16_t v) {
    b.push_back(static_cast<uint8_t>(v));
    b.push_back(static_cast<uint8_t>(v >> 8));
}
void put_u32(Bytes& b, uint32_t v) {
    for (int i = 0; i < 4; i++) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_u64(Bytes& b, uint64_t v) {
    for (int i = 0; i < 8; i++) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_arg(Bytes& b, const Arg& a) {
    b.push_back(a.is_reg ? 1 : 0);
    put_u32(b, a.value);
}

struct Reader {
    const uint8_t* p;
    const uint8_t* end;
    bool ok = true;

    uint8_t u8() {
        if (p >= end) { ok = false; return 0; }
        return *p++;
    }
    uint16_t u16() {
        uint16_t lo = u8(), hi = u8();
        return static_cast<uint16_t>(lo | (hi << 8));
    }
    uint32_t u32() {
        uint32_t v = 0;
        for (int i = 0; i < 4; i++) v |= static_cast<uint32_t>(u8()) << (8 * i);
        return v;
    }
    uint64_t u64() {
        uint64_t v = 0;
        for (int i = 0; i < 8; i++) v |= static_cast<uint64_t>(u8()) << (8 * i);
        return v;
    }
    Arg arg() {
        Arg a;
        a.is_reg = u8() != 0;
        a.value = u32();
        return a;
    }
    Bytes bytes(uint32_t n) {
        if (static_cast<size_t>(end - p) < n) { ok = false; return {}; }
        Bytes out(p, p + n);
        p += n;
        return out;
    }
};

} // namespace

Bytes encode_op(const GuestOp& op) {
    Bytes body;
    switch (op.op) {
        case Opcode::Mov:
        case Opcode::Add:
        case Opcode::Load:
            body.push_back(op.reg);
            put_arg(body, op.arg0);
            break;
        case Opcode::Store:
            put_arg(body, op.arg0);
            put_arg(body, op.arg1);
            break;
        case Opcode::StoreBytes:
            put_arg(body, op.arg0);
            put_u16(body, static_cast<uint16_t>(op.payload.size()));
            body.insert(body.end(), op.payload.begin(), op.payload.end());
            break;
        case Opcode::Syscall:
            put_u32(body, op.imm);
            body.push_back(static_cast<uint8_t>(op.args.size()));
            for (const auto& a : op.args) put_arg(body, a);
            break;
        case Opcode::FpMov:
            body.push_back(op.reg);
            put_u64(body, op.imm64);
            break;
        case Opcode::FpAdd:
        case Opcode::FpMul:
            body.push_back(op.reg);
            body.push_back(op.reg_a);
            body.push_back(op.reg_b);
            break;
        case Opcode::EmitStr:
        case Opcode::Mark:
            put_u16(body, static_cast<uint16_t>(op.payload.size()));
            body.insert(body.end(), op.payload.begin(), op.payload.end());
            break;
        case Opcode::EmitReg:
        case Opcode::EmitFp:
        case Opcode::Raise:
            body.push_back(op.reg);
            break;
        case Opcode::EmitMem:
        case Opcode::FutexWait:
            put_arg(body, op.arg0);
            put_arg(body, op.arg1);
            break;
        case Opcode::FutexWake:
            put_arg(body, op.arg0);
            break;
        case Opcode::SigReg:
            body.push_back(op.reg);
            put_u32(body, op.imm);
            break;
        case Opcode::MarkSecret:
            put_u32(body, op.arg0.value);
            put_u32(body, op.imm);
            break;
        case Opcode::SigRet:
        case Opcode::Halt:
            break;
    }
    Bytes out;
    put_u16(out, static_cast<uint16_t>(op.op));
    put_u16(out, static_cast<uint16_t>(kOpHeaderSize + body.size()));
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

uint32_t op_total_len(const uint8_t header[4]) {
    uint16_t opcode = static_cast<uint16_t>(header[0] | (header[1] << 8));
    uint16_t len = static_cast<uint16_t>(header[2] | (header[3] << 8));
    if (opcode < 1 || opcode > static_cast<uint16_t>(Opcode::Halt)) return 0;
    if (len < kOpHeaderSize) return 0;
    return len;
}

std::optional<GuestOp> decode_op(const uint8_t* data, uint32_t len) {
    if (len < kOpHeaderSize) return std::nullopt;
    Reader r{data, data + len};
    uint16_t opcode = r.u16();
    uint16_t total = r.u16();
    if (total != len || opcode < 1 || opcode > static_cast<uint16_t>(Opcode::Halt))
        return std::nullopt;
    GuestOp op;
    op.op = static_cast<Opcode>(opcode);
    switch (op.op) {
        case Opcode::Mov:
        case Opcode::Add:
        case Opcode::Load:
            op.reg = r.u8();
            op.arg0 = r.arg();
            break;
        case Opcode::Store:
            op.arg0 = r.arg();
            op.arg1 = r.arg();
            break;
        case Opcode::StoreBytes: {
            op.arg0 = r.arg();
            uint16_t n = r.u16();
            op.payload = r.bytes(n);
            break;
        }
        case Opcode::Syscall: {
            op.imm = r.u32();
            uint8_t n = r.u8();
            if (n > 7) return std::nullopt;
            for (uint8_t i = 0; i < n; i++) op.args.push_back(r.arg());
            break;
        }
        case Opcode::FpMov:
            op.reg = r.u8();
            op.imm64 = r.u64();
            break;
        case Opcode::FpAdd:
        case Opcode::FpMul:
            op.reg = r.u8();
            op.reg_a = r.u8();
            op.reg_b = r.u8();
            break;
        case Opcode::EmitStr:
        case Opcode::Mark: {
            uint16_t n = r.u16();
            op.payload = r.bytes(n);
            break;
        }
        case Opcode::EmitReg:
        case Opcode::EmitFp:
        case Opcode::Raise:
            op.reg = r.u8();
            break;
        case Opcode::EmitMem:
        case Opcode::FutexWait:
            op.arg0 = r.arg();
            op.arg1 = r.arg();
            break;
        case Opcode::FutexWake:
            op.arg0 = r.arg();
            break;
        case Opcode::SigReg:
            op.reg = r.u8();
            op.imm = r.u32();
            break;
        case Opcode::MarkSecret:
            op.arg0 = Arg::imm(r.u32());
            op.imm = r.u32();
            break;
        case Opcode::SigRet:
        case Opcode::Halt:
            break;
    }
    if (!r.ok || r.p != r.end) return std::nullopt;
    return op;
}

// ---------------------------------------------------------------------------
// Image container
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'H', 'A', 'P', 'I'};
constexpr uint32_t kImageVersion = 1;
} // namespace

void image_validate(const GuestImage& img) {
    if (img.segments.empty()) throw ParseError("image has no segments");
    for (const auto& s : img.segments) {
        if (!is_page_aligned(s.vaddr.value)) throw ParseError("segment not page aligned");
        if (s.mem_len == 0) throw ParseError("zero-length segment");
        if (s.content.size() > s.mem_len) throw ParseError("segment content exceeds mem length");
        uint64_t end = static_cast<uint64_t>(s.vaddr.value) + page_align_up(s.mem_len);
        if (end > kUserSpaceTop) throw ParseError("segment crosses the user/kernel split");
    }
    for (size_t i = 0; i < img.segments.size(); i++) {
        for (size_t j = i + 1; j < img.segments.size(); j++) {
            const auto& a = img.segments[i];
            const auto& b = img.segments[j];
            uint64_t a_end = a.vaddr.value + static_cast<uint64_t>(page_align_up(a.mem_len));
            uint64_t b_end = b.vaddr.value + static_cast<uint64_t>(page_align_up(b.mem_len));
            if (a.vaddr.value < b_end && b.vaddr.value < a_end)
                throw ParseError("segments overlap");
        }
    }
    bool entry_ok = false;
    for (const auto& s : img.segments)
        if (s.perms.x && img.entry.value >= s.vaddr.value &&
            img.entry.value < s.vaddr.value + s.mem_len)
            entry_ok = true;
    if (!entry_ok) throw ParseError("entry point outside executable segments");
    if (!VirtAddr(img.initial_sp).is_user()) throw ParseError("initial sp outside user space");
}

Bytes image_serialize(const GuestImage& img) {
    image_validate(img);
    Bytes out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kImageVersion);
    put_u32(out, img.entry.value);
    put_u32(out, img.initial_sp);
    put_u32(out, static_cast<uint32_t>(img.segments.size()));
    put_u32(out, static_cast<uint32_t>(img.libraries.size()));
    for (const auto& s : img.segments) {
        put_u32(out, s.vaddr.value);
        put_u32(out, s.mem_len);
        uint32_t flags = (s.perms.r ? 1u : 0) | (s.perms.w ? 2u : 0) | (s.perms.x ? 4u : 0);
        put_u32(out, flags);
        put_u32(out, static_cast<uint32_t>(s.kind));
        put_u32(out, static_cast<uint32_t>(s.content.size()));
        out.insert(out.end(), s.content.begin(), s.content.end());
    }
    for (const auto& name : img.libraries) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
    }
    return out;
}

GuestImage image_parse(const Bytes& data) {
    Reader r{data.data(), data.data() + data.size()};
    Bytes magic = r.bytes(4);
    if (!r.ok || std::memcmp(magic.data(), kMagic, 4) != 0)
        throw ParseError("bad image magic");
    if (r.u32() != kImageVersion) throw ParseError("unsupported image version");
    GuestImage img;
    img.entry = VirtAddr(r.u32());
    img.initial_sp = r.u32();
    uint32_t nseg = r.u32();
    uint32_t nlib = r.u32();
    if (nseg > 256 || nlib > 64) throw ParseError("image header counts out of range");
    for (uint32_t i = 0; i < nseg; i++) {
        Segment s;
        s.vaddr = VirtAddr(r.u32());
        s.mem_len = r.u32();
        uint32_t flags = r.u32();
        s.perms = {(flags & 1) != 0, (flags & 2) != 0, (flags & 4) != 0};
        uint32_t kind = r.u32();
        if (kind > 1) throw ParseError("bad segment kind");
        s.kind = static_cast<SegmentKind>(kind);
        uint32_t clen = r.u32();
        if (clen > (64u << 20)) throw ParseError("segment content too large");
        s.content = r.bytes(clen);
        img.segments.push_back(std::move(s));
    }
    for (uint32_t i = 0; i < nlib; i++) {
        uint32_t n = r.u32();
        if (n > 256) throw ParseError("library name too long");
        Bytes name = r.bytes(n);
        img.libraries.emplace_back(name.begin(), name.end());
    }
    if (!r.ok || r.p != r.end) throw ParseError("truncated or oversized image");
    image_validate(img);
    return img;
}

GuestImage image_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open image: " + path);
    Bytes data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return image_parse(data);
}

// ---------------------------------------------------------------------------
// Assembler
// ---------------------------------------------------------------------------

namespace {

const std::map<std::string, uint32_t>& symbol_table() {
    static const std::map<std::string, uint32_t> t = {
        {"O_RDONLY", 0},       {"O_WRONLY", 1},        {"O_RDWR", 2},
        {"O_CREAT", 0x40},     {"O_TRUNC", 0x200},     {"O_APPEND", 0x400},
        {"PROT_READ", 1},      {"PROT_WRITE", 2},      {"PROT_EXEC", 4},
        {"MAP_SHARED", 1},     {"MAP_PRIVATE", 2},     {"MAP_ANON", 0x20},
        {"FUTEX_WAIT", 0},     {"FUTEX_WAKE", 1},
    };
    return t;
}

struct Token {
    std::string text;
};

std::vector<std::string> tokenize(const std::string& line, int lineno) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < line.size()) {
        char c = line[i];
        if (c == '#') break;
        if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
            i++;
            continue;
        }
        if (c == '"') {
            size_t j = i + 1;
            std::string tok = "\"";
            while (j < line.size() && line[j] != '"') {
                if (line[j] == '\\' && j + 1 < line.size()) {
                    tok += line[j];
                    tok += line[j + 1];
                    j += 2;
                } else {
                    tok += line[j++];
                }
            }
            if (j >= line.size())
                throw ParseError("line " + std::to_string(lineno) + ": unterminated string");
            tok += '"';
            out.push_back(tok);
            i = j + 1;
            continue;
        }
        size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j])) &&
               line[j] != ',' && line[j] != '#')
            j++;
        out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

Bytes unescape(const std::string& quoted, int lineno) {
    if (quoted.size() < 2 || quoted.front() != '"' || quoted.back() != '"')
        throw ParseError("line " + std::to_string(lineno) + ": expected string literal");
    Bytes out;
    for (size_t i = 1; i + 1 < quoted.size(); i++) {
        char c = quoted[i];
        if (c != '\\') {
            out.push_back(static_cast<uint8_t>(c));
            continue;
        }
        i++;
        char e = quoted[i];
        switch (e) {
            case 'n': out.push_back('\n'); break;
            case 't': out.push_back('\t'); break;
            case 'r': out.push_back('\r'); break;
            case '0': out.push_back(0); break;
            case '\\': out.push_back('\\'); break;
            case '"': out.push_back('"'); break;
            case 'x': {
                if (i + 2 >= quoted.size())
                    throw ParseError("line " + std::to_string(lineno) + ": bad \\x escape");
                std::string h = quoted.substr(i + 1, 2);
                out.push_back(static_cast<uint8_t>(std::stoul(h, nullptr, 16)));
                i += 2;
                break;
            }
            default:
                throw ParseError("line " + std::to_string(lineno) + ": unknown escape");
        }
    }
    return out;
}

bool is_string_tok(const std::string& t) { return !t.empty() && t.front() == '"'; }

struct PendingFixup {
    size_t op_index;
    enum Field { Imm, Arg0, Arg1 } field;
    std::string label;
    int lineno;
};

struct Assembler {
    uint32_t code_base = 0x00010000;
    std::optional<std::string> entry_label;
    uint32_t initial_sp = 0x7fff0000;
    std::vector<GuestOp> ops;
    std::vector<uint32_t> op_offsets;
    std::map<std::string, size_t> labels; // label -> op index
    std::vector<PendingFixup> fixups;
    std::vector<Segment> data_segments;
    std::vector<std::string> libraries;

    uint32_t parse_number(const std::string& t, int lineno) {
        auto& syms = symbol_table();
        if (auto it = syms.find(t); it != syms.end()) return it->second;
        if (t.size() > 1 && t[0] == '-') {
            return static_cast<uint32_t>(-static_cast<int64_t>(parse_number(t.substr(1), lineno)));
        }
        try {
            size_t pos = 0;
            unsigned long v = std::stoul(t, &pos, 0);
            if (pos != t.size()) throw std::invalid_argument(t);
            return static_cast<uint32_t>(v);
        } catch (const std::exception&) {
            throw ParseError("line " + std::to_string(lineno) + ": bad number '" + t + "'");
        }
    }

    std::optional<uint8_t> parse_gp_reg(const std::string& t) {
        if (t.size() < 2 || t[0] != 'r') return std::nullopt;
        for (size_t i = 1; i < t.size(); i++)
            if (!std::isdigit(static_cast<unsigned char>(t[i]))) return std::nullopt;
        int n = std::stoi(t.substr(1));
        if (n < 0 || n >= kGpRegs) return std::nullopt;
        return static_cast<uint8_t>(n);
    }

    uint8_t require_gp(const std::string& t, int lineno) {
        auto r = parse_gp_reg(t);
        if (!r) throw ParseError("line " + std::to_string(lineno) + ": expected register, got '" + t + "'");
        return *r;
    }

    uint8_t require_fp(const std::string& t, int lineno) {
        if (t.size() >= 2 && t[0] == 'f') {
            bool digits = true;
            for (size_t i = 1; i < t.size(); i++)
                if (!std::isdigit(static_cast<unsigned char>(t[i]))) digits = false;
            if (digits) {
                int n = std::stoi(t.substr(1));
                if (n >= 0 && n < kFpRegs) return static_cast<uint8_t>(n);
            }
        }
        throw ParseError("line " + std::to_string(lineno) + ": expected fp register, got '" + t + "'");
    }

    Arg parse_arg(const std::string& t, int lineno, PendingFixup::Field field) {
        if (auto r = parse_gp_reg(t)) return Arg::reg(*r);
        if (!t.empty() && t[0] == '@') {
            fixups.push_back({ops.size(), field, t.substr(1), lineno});
            return Arg::imm(0);
        }
        return Arg::imm(parse_number(t, lineno));
    }

    void expect_args(const std::vector<std::string>& toks, size_t n, int lineno) {
        if (toks.size() != n + 1)
            throw ParseError("line " + std::to_string(lineno) + ": '" + toks[0] + "' expects " +
                             std::to_string(n) + " operand(s)");
    }
};

} // namespace

GuestImage assemble_program(const std::string& text) {
    Assembler as;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        lineno++;
        auto toks = tokenize(line, lineno);
        if (toks.empty()) continue;
        const std::string& head = toks[0];

        if (head[0] == '.') {
            if (head == ".code") {
                as.expect_args(toks, 1, lineno);
                as.code_base = as.parse_number(toks[1], lineno);
            } else if (head == ".sp") {
                as.expect_args(toks, 1, lineno);
                as.initial_sp = as.parse_number(toks[1], lineno);
            } else if (head == ".entry") {
                as.expect_args(toks, 1, lineno);
                if (toks[1][0] != '@') throw ParseError("line " + std::to_string(lineno) + ": .entry wants @label");
                as.entry_label = toks[1].substr(1);
            } else if (head == ".library") {
                as.expect_args(toks, 1, lineno);
                Bytes b = unescape(toks[1], lineno);
                as.libraries.emplace_back(b.begin(), b.end());
            } else if (head == ".data") {
                // .data ADDR "content" | .data ADDR LEN | .data ADDR LEN "content"
                Segment s;
                s.kind = SegmentKind::Data;
                s.perms = {true, true, false};
                if (toks.size() < 3)
                    throw ParseError("line " + std::to_string(lineno) + ": .data needs addr and content/len");
                s.vaddr = VirtAddr(as.parse_number(toks[1], lineno));
                size_t i = 2;
                if (!is_string_tok(toks[i])) {
                    s.mem_len = as.parse_number(toks[i], lineno);
                    i++;
                }
                if (i < toks.size()) {
                    s.content = unescape(toks[i], lineno);
                    if (s.mem_len == 0) s.mem_len = static_cast<uint32_t>(s.content.size());
                    i++;
                }
                if (i != toks.size())
                    throw ParseError("line " + std::to_string(lineno) + ": trailing tokens on .data");
                if (s.mem_len == 0)
                    throw ParseError("line " + std::to_string(lineno) + ": empty .data segment");
                as.data_segments.push_back(std::move(s));
            } else {
                throw ParseError("line " + std::to_string(lineno) + ": unknown directive " + head);
            }
            continue;
        }

        if (head[0] == '@' && head.back() == ':') {
            std::string name = head.substr(1, head.size() - 2);
            if (name.empty() || as.labels.count(name))
                throw ParseError("line " + std::to_string(lineno) + ": bad or duplicate label");
            as.labels[name] = as.ops.size();
            continue;
        }

        GuestOp op;
        if (head == "mov" || head == "add" || head == "load") {
            op.op = head == "mov" ? Opcode::Mov : head == "add" ? Opcode::Add : Opcode::Load;
            as.expect_args(toks, 2, lineno);
            op.reg = as.require_gp(toks[1], lineno);
            op.arg0 = as.parse_arg(toks[2], lineno, PendingFixup::Arg0);
        } else if (head == "store") {
            op.op = Opcode::Store;
            as.expect_args(toks, 2, lineno);
            op.arg0 = as.parse_arg(toks[1], lineno, PendingFixup::Arg0);
            op.arg1 = as.parse_arg(toks[2], lineno, PendingFixup::Arg1);
        } else if (head == "storeb") {
            op.op = Opcode::StoreBytes;
            as.expect_args(toks, 2, lineno);
            op.arg0 = as.parse_arg(toks[1], lineno, PendingFixup::Arg0);
            op.payload = unescape(toks[2], lineno);
        } else if (head == "syscall") {
            op.op = Opcode::Syscall;
            if (toks.size() < 2)
                throw ParseError("line " + std::to_string(lineno) + ": syscall needs a name/number");
            if (auto n = sysno::from_name(toks[1]))
                op.imm = *n;
            else
                op.imm = as.parse_number(toks[1], lineno);
            if (toks.size() > 9)
                throw ParseError("line " + std::to_string(lineno) + ": too many syscall args");
            for (size_t i = 2; i < toks.size(); i++)
                op.args.push_back(as.parse_arg(toks[i], lineno, PendingFixup::Arg0));
        } else if (head == "fpmov") {
            op.op = Opcode::FpMov;
            as.expect_args(toks, 2, lineno);
            op.reg = as.require_fp(toks[1], lineno);
            double d = 0;
            auto& t = toks[2];
            auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), d);
            if (ec != std::errc() || p != t.data() + t.size())
                throw ParseError("line " + std::to_string(lineno) + ": bad float '" + t + "'");
            uint64_t bits;
            std::memcpy(&bits, &d, 8);
            op.imm64 = bits;
        } else if (head == "fpadd" || head == "fpmul") {
            op.op = head == "fpadd" ? Opcode::FpAdd : Opcode::FpMul;
            as.expect_args(toks, 3, lineno);
            op.reg = as.require_fp(toks[1], lineno);
            op.reg_a = as.require_fp(toks[2], lineno);
            op.reg_b = as.require_fp(toks[3], lineno);
        } else if (head == "emit") {
            op.op = Opcode::EmitStr;
            as.expect_args(toks, 1, lineno);
            op.payload = unescape(toks[1], lineno);
        } else if (head == "emitr") {
            op.op = Opcode::EmitReg;
            as.expect_args(toks, 1, lineno);
            op.reg = as.require_gp(toks[1], lineno);
        } else if (head == "emitm") {
            op.op = Opcode::EmitMem;
            as.expect_args(toks, 2, lineno);
            op.arg0 = as.parse_arg(toks[1], lineno, PendingFixup::Arg0);
            op.arg1 = as.parse_arg(toks[2], lineno, PendingFixup::Arg1);
        } else if (head == "emitf") {
            op.op = Opcode::EmitFp;
            as.expect_args(toks, 1, lineno);
            op.reg = as.require_fp(toks[1], lineno);
        } else if (head == "sigreg") {
            op.op = Opcode::SigReg;
            as.expect_args(toks, 2, lineno);
            op.reg = static_cast<uint8_t>(as.parse_number(toks[1], lineno));
            if (toks[2][0] == '@') {
                as.fixups.push_back({as.ops.size(), PendingFixup::Imm, toks[2].substr(1), lineno});
            } else {
                op.imm = as.parse_number(toks[2], lineno);
            }
        } else if (head == "raise") {
            op.op = Opcode::Raise;
            as.expect_args(toks, 1, lineno);
            op.reg = static_cast<uint8_t>(as.parse_number(toks[1], lineno));
        } else if (head == "sigret") {
            op.op = Opcode::SigRet;
            as.expect_args(toks, 0, lineno);
        } else if (head == "futexwait") {
            op.op = Opcode::FutexWait;
            as.expect_args(toks, 2, lineno);
            op.arg0 = as.parse_arg(toks[1], lineno, PendingFixup::Arg0);
            op.arg1 = as.parse_arg(toks[2], lineno, PendingFixup::Arg1);
        } else if (head == "futexwake") {
            op.op = Opcode::FutexWake;
            as.expect_args(toks, 1, lineno);
            op.arg0 = as.parse_arg(toks[1], lineno, PendingFixup::Arg0);
        } else if (head == "marksecret") {
            op.op = Opcode::MarkSecret;
            as.expect_args(toks, 2, lineno);
            op.arg0 = Arg::imm(as.parse_number(toks[1], lineno));
            op.imm = as.parse_number(toks[2], lineno);
        } else if (head == "mark") {
            op.op = Opcode::Mark;
            as.expect_args(toks, 1, lineno);
            op.payload = unescape(toks[1], lineno);
        } else if (head == "halt") {
            op.op = Opcode::Halt;
            as.expect_args(toks, 0, lineno);
        } else {
            throw ParseError("line " + std::to_string(lineno) + ": unknown op '" + head + "'");
        }
        as.ops.push_back(std::move(op));
    }

    if (as.ops.empty()) throw ParseError("program has no instructions");
    if (as.ops.back().op != Opcode::Halt && as.ops.back().op != Opcode::SigRet) {
        GuestOp halt;
        halt.op = Opcode::Halt;
        as.ops.push_back(halt);
    }

    // Layout pass: compute offsets, then resolve label fixups and re-encode.
    as.op_offsets.resize(as.ops.size());
    uint32_t off = 0;
    for (size_t i = 0; i < as.ops.size(); i++) {
        as.op_offsets[i] = off;
        off += static_cast<uint32_t>(encode_op(as.ops[i]).size());
    }
    auto label_addr = [&](const PendingFixup& fx) -> uint32_t {
        auto it = as.labels.find(fx.label);
        if (it == as.labels.end())
            throw ParseError("line " + std::to_string(fx.lineno) + ": undefined label @" + fx.label);
        return as.code_base + as.op_offsets[it->second];
    };
    for (const auto& fx : as.fixups) {
        uint32_t addr = label_addr(fx);
        GuestOp& op = as.ops[fx.op_index];
        switch (fx.field) {
            case PendingFixup::Imm: op.imm = addr; break;
            case PendingFixup::Arg0:
                if (op.op == Opcode::Syscall) {
                    // Labels in syscall args are rare; patch the first imm 0.
                    for (auto& a : op.args)
                        if (!a.is_reg && a.value == 0) { a.value = addr; break; }
                } else {
                    op.arg0.value = addr;
                }
                break;
            case PendingFixup::Arg1: op.arg1.value = addr; break;
        }
    }

    Bytes code;
    for (const auto& op : as.ops) {
        Bytes e = encode_op(op);
        code.insert(code.end(), e.begin(), e.end());
    }

    GuestImage img;
    img.initial_sp = as.initial_sp;
    Segment cs;
    cs.vaddr = VirtAddr(as.code_base);
    cs.mem_len = static_cast<uint32_t>(code.size());
    cs.perms = {true, false, true};
    cs.kind = SegmentKind::Code;
    cs.content = std::move(code);
    img.segments.push_back(std::move(cs));
    for (auto& d : as.data_segments) img.segments.push_back(std::move(d));
    img.libraries = as.libraries;
    img.entry = VirtAddr(as.code_base);
    if (as.entry_label) {
        auto it = as.labels.find(*as.entry_label);
        if (it == as.labels.end()) throw ParseError("undefined .entry label");
        img.entry = VirtAddr(as.code_base + as.op_offsets[it->second]);
    }
    image_validate(img);
    return img;
}

GuestImage assemble_program_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open program: " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return assemble_program(os.str());
}

// ---------------------------------------------------------------------------
// Interpreter core
// ---------------------------------------------------------------------------

namespace {

uint32_t arg_value(const Arg& a, const RegisterFile& regs) {
    return a.is_reg ? regs.gp[a.value % kGpRegs] : a.value;
}

double fp_get(const RegisterFile& regs, uint8_t i) {
    double d;
    uint64_t bits = regs.fp[i % kFpRegs];
    std::memcpy(&d, &bits, 8);
    return d;
}

void fp_set(RegisterFile& regs, uint8_t i, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    regs.fp[i % kFpRegs] = bits;
}

StepResult kill(const std::string& why) { return {StepStatus::Kill, why}; }

StepResult mem_outcome(GuestEnv::Mem m) {
    switch (m) {
        case GuestEnv::Mem::Ok: return {StepStatus::Advance, {}};
        case GuestEnv::Mem::Fault: return {StepStatus::Suspend, {}};
        case GuestEnv::Mem::Kill: return kill("MemoryAccessViolation");
    }
    return kill("MemoryAccessViolation");
}

} // namespace

StepResult exec_op(const GuestOp& op, RegisterFile& regs, GuestEnv& env) {
    switch (op.op) {
        case Opcode::Mov:
            regs.gp[op.reg % kGpRegs] = arg_value(op.arg0, regs);
            return {};
        case Opcode::Add:
            regs.gp[op.reg % kGpRegs] += arg_value(op.arg0, regs);
            return {};
        case Opcode::Load: {
            uint8_t b[4];
            auto m = env.mem_read(VirtAddr(arg_value(op.arg0, regs)), b, 4);
            if (m != GuestEnv::Mem::Ok) return mem_outcome(m);
            regs.gp[op.reg % kGpRegs] = static_cast<uint32_t>(b[0]) | (b[1] << 8) | (b[2] << 16) |
                                        (static_cast<uint32_t>(b[3]) << 24);
            return {};
        }
        case Opcode::Store: {
            uint32_t v = arg_value(op.arg1, regs);
            uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                            static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
            return mem_outcome(env.mem_write(VirtAddr(arg_value(op.arg0, regs)), b, 4));
        }
        case Opcode::StoreBytes:
            if (op.payload.empty()) return {};
            return mem_outcome(env.mem_write(VirtAddr(arg_value(op.arg0, regs)),
                                             op.payload.data(),
                                             static_cast<uint32_t>(op.payload.size())));
        case Opcode::Syscall: {
            std::vector<uint32_t> vals;
            for (const auto& a : op.args) vals.push_back(arg_value(a, regs));
            for (size_t i = 0; i < vals.size() && i < 7; i++) regs.gp[i] = vals[i];
            for (size_t i = vals.size(); i < 7; i++) regs.gp[i] = 0;
            regs.gp[7 % kGpRegs] = op.imm;
            bool sync = env.syscall(op.imm, vals);
            return {sync ? StepStatus::Advance : StepStatus::Suspend, {}};
        }
        case Opcode::FpMov:
            if (!env.fp_ready()) return {StepStatus::Suspend, {}};
            regs.fp[op.reg % kFpRegs] = op.imm64;
            return {};
        case Opcode::FpAdd:
        case Opcode::FpMul: {
            if (!env.fp_ready()) return {StepStatus::Suspend, {}};
            double a = fp_get(regs, op.reg_a);
            double b = fp_get(regs, op.reg_b);
            fp_set(regs, op.reg, op.op == Opcode::FpAdd ? a + b : a * b);
            return {};
        }
        case Opcode::EmitStr:
            env.emit(op.payload);
            return {};
        case Opcode::EmitReg: {
            std::string s = std::to_string(regs.gp[op.reg % kGpRegs]);
            env.emit(Bytes(s.begin(), s.end()));
            return {};
        }
        case Opcode::EmitMem: {
            uint32_t len = arg_value(op.arg1, regs);
            if (len > (1u << 20)) return kill("EmitTooLarge");
            Bytes buf(len);
            auto m = env.mem_read(VirtAddr(arg_value(op.arg0, regs)), buf.data(), len);
            if (m != GuestEnv::Mem::Ok) return mem_outcome(m);
            env.emit(buf);
            return {};
        }
        case Opcode::EmitFp: {
            char buf[64];
            double d = fp_get(regs, op.reg);
            auto [p, ec] = std::to_chars(buf, buf + sizeof buf, d);
            std::string s = (ec == std::errc()) ? std::string(buf, p) : "nan";
            env.emit(Bytes(s.begin(), s.end()));
            return {};
        }
        case Opcode::SigReg: {
            std::vector<uint32_t> vals = {op.reg, op.imm};
            regs.gp[0] = op.reg;
            regs.gp[1] = op.imm;
            for (int i = 2; i < 7; i++) regs.gp[i] = 0;
            regs.gp[7] = sysno::kRtSigaction;
            bool sync = env.syscall(sysno::kRtSigaction, vals);
            return {sync ? StepStatus::Advance : StepStatus::Suspend, {}};
        }
        case Opcode::Raise:
            return {env.raise_signal(op.reg) ? StepStatus::Advance : StepStatus::Suspend, {}};
        case Opcode::SigRet: {
            for (int i = 0; i < 7; i++) regs.gp[i] = 0;
            regs.gp[7] = sysno::kRtSigreturn;
            bool sync = env.syscall(sysno::kRtSigreturn, {});
            return {sync ? StepStatus::Advance : StepStatus::Suspend, {}};
        }
        case Opcode::FutexWait: {
            uint32_t addr = arg_value(op.arg0, regs);
            uint32_t expected = arg_value(op.arg1, regs);
            std::vector<uint32_t> vals = {addr, guestabi::kFutexWait, expected};
            regs.gp[0] = addr;
            regs.gp[1] = guestabi::kFutexWait;
            regs.gp[2] = expected;
            for (int i = 3; i < 7; i++) regs.gp[i] = 0;
            regs.gp[7] = sysno::kFutex;
            bool sync = env.syscall(sysno::kFutex, vals);
            return {sync ? StepStatus::Advance : StepStatus::Suspend, {}};
        }
        case Opcode::FutexWake: {
            uint32_t addr = arg_value(op.arg0, regs);
            std::vector<uint32_t> vals = {addr, guestabi::kFutexWake, 0x7fffffff};
            regs.gp[0] = addr;
            regs.gp[1] = guestabi::kFutexWake;
            regs.gp[2] = 0x7fffffff;
            for (int i = 3; i < 7; i++) regs.gp[i] = 0;
            regs.gp[7] = sysno::kFutex;
            bool sync = env.syscall(sysno::kFutex, vals);
            return {sync ? StepStatus::Advance : StepStatus::Suspend, {}};
        }
        case Opcode::MarkSecret: {
            uint32_t len = op.imm;
            if (len == 0 || len > (64u << 10)) return kill("BadSecretRange");
            Bytes buf(len);
            auto m = env.mem_read(VirtAddr(op.arg0.value), buf.data(), len);
            if (m != GuestEnv::Mem::Ok) return mem_outcome(m);
            env.mark_secret(VirtAddr(op.arg0.value), len, buf);
            return {};
        }
        case Opcode::Mark:
            env.trace_mark(std::string(op.payload.begin(), op.payload.end()));
            return {};
        case Opcode::Halt: {
            regs.gp[0] = 0;
            for (int i = 1; i < 7; i++) regs.gp[i] = 0;
            regs.gp[7] = sysno::kExit;
            bool sync = env.syscall(sysno::kExit, {0});
            return {sync ? StepStatus::Halt : StepStatus::Suspend, {}};
        }
    }
    return kill("IllegalInstruction");
}

} // namespace shadowworlds
