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

#pragma once

#include "shadowworlds/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace shadowworlds {

// Syscall numbers (ARM EABI where one exists; tz_execve is ours).
namespace sysno {
constexpr uint32_t kExit = 1;
constexpr uint32_t kRead = 3;
constexpr uint32_t kWrite = 4;
constexpr uint32_t kOpen = 5;
constexpr uint32_t kClose = 6;
constexpr uint32_t kGetpid = 20;
constexpr uint32_t kBrk = 45;
constexpr uint32_t kMunmap = 91;
constexpr uint32_t kRtSigreturn = 173;
constexpr uint32_t kRtSigaction = 174;
constexpr uint32_t kMmap2 = 192;
constexpr uint32_t kFutex = 240;
constexpr uint32_t kTzExecve = 401;
const char* name(uint32_t num);
std::optional<uint32_t> from_name(const std::string& s);
} // namespace sysno

namespace guestabi {
constexpr uint32_t kFutexWait = 0;
constexpr uint32_t kFutexWake = 1;
constexpr uint32_t kProtRead = 1, kProtWrite = 2, kProtExec = 4;
constexpr uint32_t kMapShared = 1, kMapPrivate = 2, kMapAnon = 0x20;
constexpr int32_t kEnoent = -2, kEbadf = -9, kEagain = -11, kEfault = -14,
                  kEinval = -22, kEnosys = -38;
} // namespace guestabi

enum class Opcode : uint16_t {
    Mov = 1,
    Add,
    Load,
    Store,
    StoreBytes,
    Syscall,
    FpMov,
    FpAdd,
    FpMul,
    EmitStr,
    EmitReg,
    EmitMem,
    EmitFp,
    SigReg,
    Raise,
    SigRet,
    FutexWait,
    FutexWake,
    MarkSecret,
    Mark,
    Halt,
};

/// Immediate or register operand.
struct Arg {
    bool is_reg = false;
    uint32_t value = 0; // register index or immediate
    static Arg imm(uint32_t v) { return {false, v}; }
    static Arg reg(uint32_t r) { return {true, r}; }
};

struct GuestOp {
    Opcode op;
    uint8_t reg = 0;       // destination / fp destination / signum
    uint8_t reg_a = 0;     // fp operand a
    uint8_t reg_b = 0;     // fp operand b
    Arg arg0;              // addr / src / expected ...
    Arg arg1;
    uint32_t imm = 0;      // handler vaddr, syscall number, u32 length
    uint64_t imm64 = 0;    // fp literal bits
    Bytes payload;         // storebytes / emit / mark text
    std::vector<Arg> args; // syscall arguments
};

constexpr uint32_t kOpHeaderSize = 4; // u16 opcode, u16 total length

Bytes encode_op(const GuestOp& op);
/// Decodes one instruction; len_hint is the u16 length field already read.
/// Returns nullopt on malformed bytes.
std::optional<GuestOp> decode_op(const uint8_t* data, uint32_t len);
/// Reads the total encoded length from a 4-byte header, 0 if invalid.
uint32_t op_total_len(const uint8_t header[4]);

enum class SegmentKind : uint32_t { Code = 0, Data = 1 };

struct Segment {
    VirtAddr vaddr;
    uint32_t mem_len = 0; // bytes; mapping covers page_align_up(mem_len)
    Perms perms;
    SegmentKind kind = SegmentKind::Data;
    Bytes content; // content.size() <= mem_len; tail is zero-filled
};

struct GuestImage {
    VirtAddr entry;
    uint32_t initial_sp = 0x7fff0000;
    std::vector<Segment> segments;
    std::vector<std::string> libraries; // names covered by system-wide hash lists
};

/// "HAPI" container, little-endian throughout.
Bytes image_serialize(const GuestImage& img);
GuestImage image_parse(const Bytes& data); // throws ParseError
GuestImage image_load(const std::string& path);

/// Compiles the line-oriented program grammar (see docs/guest-programs in the
/// README) into an image whose code segment holds the encoded instructions.
GuestImage assemble_program(const std::string& text);
GuestImage assemble_program_file(const std::string& path);

void image_validate(const GuestImage& img); // throws ParseError on invariant breaks

/// Everything the interpreter core needs from its surroundings. The shielded
/// system and the direct-execution reference mode provide different
/// implementations; the instruction semantics stay shared.
class GuestEnv {
public:
    virtual ~GuestEnv() = default;

    enum class Mem { Ok, Fault, Kill };
    virtual Mem mem_read(VirtAddr addr, uint8_t* out, uint32_t len) = 0;
    virtual Mem mem_write(VirtAddr addr, const uint8_t* data, uint32_t len) = 0;

    /// False when FP use must first raise an UNDEFINED exception.
    virtual bool fp_ready() = 0;

    virtual void emit(const Bytes& bytes) = 0;
    virtual void trace_mark(const std::string& name) = 0;
    virtual void mark_secret(VirtAddr addr, uint32_t len, const Bytes& contents) = 0;

    /// Returns true when handled synchronously (reference mode); false when
    /// the step suspends pending an exception round trip.
    virtual bool syscall(uint32_t number, const std::vector<uint32_t>& args) = 0;
    virtual bool raise_signal(uint8_t signum) = 0;
};

enum class StepStatus { Advance, Suspend, Halt, Kill };

struct StepResult {
    StepStatus status = StepStatus::Advance;
    std::string kill_reason;
};

/// Executes one decoded instruction against regs/env. pc handling is the
/// caller's: Advance means pc += encoded length; Suspend means an exception
/// path owns the continuation.
StepResult exec_op(const GuestOp& op, RegisterFile& regs, GuestEnv& env);

} // namespace shadowworlds
