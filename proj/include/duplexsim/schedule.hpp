// Copyright 2026 The duplexsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pseudo-instruction schedules for the forward and backward passes, the
// memory access traces they induce, and data lifetimes computed both from
// traces and in closed form.
//
// Buffer naming (l = block, 1-based):
//   in            raw input batch
//   h.l           backbone output of block l (h.0 is `in`)
//   y1.l, y2.l    branch stream outputs of block l; y1.0, y2.0 are the stem
//   f1.l, f2.l    residual function outputs (forward or recomputed)
//   u.l           pooled backbone injection into block l (static)
//   g1.l, g2.l    loss gradients wrt y1.l, y2.l
//   t1.l, t2.l    input-gradient partials U1a(.), U2a(.)
//   q1.l, q2.l    weight gradients (static)
//   feat          classifier input

#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "duplexsim/bfp.hpp"
#include "duplexsim/duplex.hpp"
#include "duplexsim/error.hpp"
#include "duplexsim/systolic.hpp"
#include "duplexsim/tensor.hpp"

namespace duplexsim::sched {

using Tick = std::int64_t;

// ---------------------------------------------------------------------------
// Dimensions and latency

struct ConvLayerDims {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t height = 1; // input spatial size (stride 1, same padding)
    std::size_t width = 1;
    std::size_t kernel = 1;

    void validate() const {
        if (in_channels < 1 || out_channels < 1 || height < 1 || width < 1 || kernel < 1)
            throw ConfigError("layer dims must be positive");
    }
    friend bool operator==(const ConvLayerDims&, const ConvLayerDims&) = default;
};

struct BlockDims {
    ConvLayerDims g, f1, f2;
};

struct NetworkDims {
    Variant variant = Variant::DuDNN;
    std::size_t batch = 1;
    std::size_t in_channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t num_classes = 2;
    std::vector<BlockDims> blocks;

    [[nodiscard]] std::size_t depth() const { return blocks.size(); }
    void validate() const {
        if (blocks.empty()) throw ConfigError("network dims: at least one block required");
        if (batch < 1 || in_channels < 1 || height < 1 || width < 1) throw ConfigError("network dims must be positive");
        for (const auto& b : blocks) {
            b.f1.validate();
            b.f2.validate();
            if (has_backbone(variant)) b.g.validate();
        }
    }
};

inline NetworkDims network_dims(const DuDnnSpec& spec, std::size_t batch) {
    spec.validate();
    NetworkDims d;
    d.variant = spec.variant;
    d.batch = batch;
    d.in_channels = spec.in_channels;
    d.height = spec.height;
    d.width = spec.width;
    d.num_classes = spec.num_classes;
    for (std::size_t l = 0; l < spec.blocks; ++l) {
        BlockDims b;
        b.g = {l == 0 ? spec.in_channels : spec.backbone_channels, spec.backbone_channels, spec.height, spec.width,
               spec.kernel};
        b.f1 = {spec.branch_channels, spec.branch_channels, spec.branch_height(), spec.branch_width(), spec.kernel};
        b.f2 = b.f1;
        d.blocks.push_back(b);
    }
    return d;
}

/// Published counts B*Cin*W*H*k^2 (no output-channel factor); Full
/// multiplies by Cout.
enum class MacConvention { Published, Full };

inline std::string_view to_string(MacConvention c) { return c == MacConvention::Published ? "published" : "full"; }

inline MacConvention parse_mac_convention(std::string_view s) {
    if (s == "published") return MacConvention::Published;
    if (s == "full") return MacConvention::Full;
    throw ConfigError("unknown MAC convention '" + std::string(s) + "' (expected published|full)");
}

enum class ConvRole { G, F1, F2 };

inline std::uint64_t op_workload(const ConvLayerDims& d, std::size_t batch, MacConvention conv = MacConvention::Published) {
    std::uint64_t n = static_cast<std::uint64_t>(batch) * d.in_channels * d.width * d.height * d.kernel * d.kernel;
    if (conv == MacConvention::Full) n *= d.out_channels;
    return n;
}

struct LatencyModel {
    systolic::CycleMode mode = systolic::CycleMode::Analytical;
    MacConvention macs = MacConvention::Published;
    systolic::ArrayConfig array;

    /// Analytical ticks are 1/R seconds (latency = N ticks); detailed ticks are clock cycles.
    [[nodiscard]] double seconds_per_tick() const {
        return mode == systolic::CycleMode::Analytical ? 1.0 / systolic::throughput(array) : 1.0 / array.clock_hz;
    }
    [[nodiscard]] double throughput() const { return systolic::throughput(array); }
};

// ---------------------------------------------------------------------------
// Instructions

enum class Opcode {
    LOAD,
    CONV_G,
    CONV_F1,
    CONV_F2,
    INVGRAD_U1A,
    INVGRAD_U2A,
    WGRAD_U1W,
    WGRAD_U2W,
    ADD,
    SUB,
    POOL,
    RELU,
    RELU_GRAD,
    RECOMPUTE_F1,
    RECOMPUTE_F2,
    LOSS_GRAD,
};

inline constexpr std::pair<Opcode, std::string_view> kOpcodeNames[] = {
    {Opcode::LOAD, "LOAD"},
    {Opcode::CONV_G, "CONV_G"},
    {Opcode::CONV_F1, "CONV_F1"},
    {Opcode::CONV_F2, "CONV_F2"},
    {Opcode::INVGRAD_U1A, "INVGRAD_U1A"},
    {Opcode::INVGRAD_U2A, "INVGRAD_U2A"},
    {Opcode::WGRAD_U1W, "WGRAD_U1W"},
    {Opcode::WGRAD_U2W, "WGRAD_U2W"},
    {Opcode::ADD, "ADD"},
    {Opcode::SUB, "SUB"},
    {Opcode::POOL, "POOL"},
    {Opcode::RELU, "RELU"},
    {Opcode::RELU_GRAD, "RELU_GRAD"},
    {Opcode::RECOMPUTE_F1, "RECOMPUTE_F1"},
    {Opcode::RECOMPUTE_F2, "RECOMPUTE_F2"},
    {Opcode::LOSS_GRAD, "LOSS_GRAD"},
};

inline std::string_view to_string(Opcode op) {
    for (const auto& [o, n] : kOpcodeNames)
        if (o == op) return n;
    return "?";
}

inline Opcode parse_opcode(std::string_view s) {
    for (const auto& [o, n] : kOpcodeNames)
        if (n == s) return o;
    throw ScheduleError("unknown opcode '" + std::string(s) + "'");
}

struct Instruction {
    Opcode op = Opcode::LOAD;
    std::vector<std::string> inputs;
    std::string output;
    std::optional<std::string> overwrite;

    friend bool operator==(const Instruction&, const Instruction&) = default;
};

/// Block index carried in a buffer name suffix ("f1.3" -> 3); 0 when absent.
inline std::size_t block_of(std::string_view name) {
    const auto dot = name.rfind('.');
    if (dot == std::string_view::npos) return 0;
    std::size_t v = 0;
    const auto* first = name.data() + dot + 1;
    const auto* last = name.data() + name.size();
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || p != last) return 0;
    return v;
}

inline std::string_view stem_of(std::string_view name) {
    const auto dot = name.rfind('.');
    return dot == std::string_view::npos ? name : name.substr(0, dot);
}

inline std::string buf(std::string_view stem, std::size_t l) { return std::string(stem) + "." + std::to_string(l); }

struct BufferInfo {
    Shape4 shape;
    bool is_static = false;
};

enum class Pass { Forward, Backward, Iteration };

inline std::string_view to_string(Pass p) {
    switch (p) {
    case Pass::Forward: return "forward";
    case Pass::Backward: return "backward";
    case Pass::Iteration: return "iteration";
    }
    return "?";
}

struct Schedule {
    Variant variant = Variant::DuDNN;
    Pass pass = Pass::Forward;
    std::vector<Instruction> code;
    std::map<std::string, BufferInfo> buffers;

    [[nodiscard]] bool is_static(const std::string& b) const {
        auto it = buffers.find(b);
        return it != buffers.end() && it->second.is_static;
    }
};

/// Every input written earlier; no read of a buffer after it was overwritten
/// and before it is written again.
inline void validate_schedule(const Schedule& s) {
    std::set<std::string> live, dead;
    for (std::size_t i = 0; i < s.code.size(); ++i) {
        const auto& ins = s.code[i];
        const std::string where = "instruction " + std::to_string(i) + " (" + std::string(to_string(ins.op)) + ")";
        for (const auto& in : ins.inputs) {
            if (dead.count(in)) throw ScheduleError(where + " reads overwritten buffer '" + in + "'");
            if (!live.count(in)) throw ScheduleError(where + " reads '" + in + "' before any write");
        }
        if (ins.output.empty()) throw ScheduleError(where + " has no output");
        if (!s.buffers.count(ins.output)) throw ScheduleError(where + " writes undeclared buffer '" + ins.output + "'");
        if (ins.overwrite) {
            if (!live.count(*ins.overwrite)) throw ScheduleError(where + " overwrites a buffer that is not live");
            live.erase(*ins.overwrite);
            dead.insert(*ins.overwrite);
        }
        live.insert(ins.output);
        dead.erase(ins.output);
    }
}

// ---------------------------------------------------------------------------
// Emission

namespace detail {

class Emitter {
public:
    Emitter(const NetworkDims& d, Pass p) : dims_(d) {
        d.validate();
        s_.variant = d.variant;
        s_.pass = p;
    }

    void emit(Opcode op, std::vector<std::string> in, const std::string& out, std::optional<std::string> ow = {}) {
        declare(out);
        s_.code.push_back({op, std::move(in), out, std::move(ow)});
    }

    Schedule take() { return std::move(s_); }
    const NetworkDims& dims() const { return dims_; }

private:
    Shape4 stream_shape(std::size_t j) const {
        const auto& f = j == 0 ? dims_.blocks.front().f1 : dims_.blocks[j - 1].f2;
        const std::size_t c = j == 0 ? f.in_channels : f.out_channels;
        return {dims_.batch, c, f.height, f.width};
    }

    void declare(const std::string& name) {
        if (s_.buffers.count(name)) return;
        const std::string stem(stem_of(name));
        const std::size_t l = block_of(name);
        const std::size_t B = dims_.batch;
        BufferInfo info;
        auto conv_out = [&](const ConvLayerDims& c) { return Shape4{B, c.out_channels, c.height, c.width}; };
        auto conv_in = [&](const ConvLayerDims& c) { return Shape4{B, c.in_channels, c.height, c.width}; };
        auto weight = [&](const ConvLayerDims& c) { return Shape4{c.out_channels, c.in_channels, c.kernel, c.kernel}; };
        if (name == "in") {
            info.shape = {B, dims_.in_channels, dims_.height, dims_.width};
        } else if (name == "feat") {
            info.shape = {B, 2 * stream_shape(dims_.depth()).c, 1, 1};
        } else if (stem == "h") {
            info.shape = conv_out(dims_.blocks.at(l - 1).g);
        } else if (stem == "y1" || stem == "y2" || stem == "g1" || stem == "g2") {
            info.shape = stream_shape(l);
        } else if (stem == "f1" || stem == "u") {
            info.shape = conv_out(dims_.blocks.at(l - 1).f1);
            info.is_static = stem == "u";
        } else if (stem == "f2") {
            info.shape = conv_out(dims_.blocks.at(l - 1).f2);
        } else if (stem == "t1") {
            info.shape = conv_in(dims_.blocks.at(l - 1).f1);
        } else if (stem == "t2") {
            info.shape = conv_in(dims_.blocks.at(l - 1).f2);
        } else if (stem == "a1" || stem == "a2" || stem == "d2" || stem == "ga1") {
            info.shape = stream_shape(l);
        } else if (stem == "q1") {
            info.shape = weight(dims_.blocks.at(l - 1).f1);
            info.is_static = true;
        } else if (stem == "q2") {
            info.shape = weight(dims_.blocks.at(l - 1).f2);
            info.is_static = true;
        } else {
            throw ScheduleError("emitter: unknown buffer '" + name + "'");
        }
        s_.buffers.emplace(name, info);
    }

    const NetworkDims& dims_;
    Schedule s_;
};

inline void emit_forward(Emitter& e) {
    const auto& d = e.dims();
    const std::size_t L = d.depth();
    const Variant v = d.variant;
    const bool fi = v == Variant::FI;
    e.emit(Opcode::LOAD, {}, "in");
    std::string h = "in";
    if (v == Variant::CA) {
        for (std::size_t l = 1; l <= L; ++l) {
            e.emit(Opcode::CONV_G, {h}, buf("h", l), h);
            h = buf("h", l);
        }
        e.emit(Opcode::POOL, {h}, "y1.0");
        e.emit(Opcode::POOL, {h}, "y2.0");
    } else {
        e.emit(Opcode::POOL, {"in"}, "y1.0");
        e.emit(Opcode::POOL, {"in"}, "y2.0");
    }
    for (std::size_t l = 1; l <= L; ++l) {
        const std::string x1 = buf("y1", l - 1), x2 = buf("y2", l - 1);
        std::vector<std::string> add2 = {x2};
        if (has_block_injections(v)) {
            e.emit(Opcode::CONV_G, {h}, buf("h", l), h);
            h = buf("h", l);
            e.emit(Opcode::POOL, {h}, buf("u", l));
            add2.push_back(buf("u", l));
        }
        e.emit(Opcode::CONV_F1, {x1}, buf("f1", l));
        add2.push_back(buf("f1", l));
        if (fi) {
            e.emit(Opcode::ADD, add2, buf("a2", l));
            e.emit(Opcode::RELU, {buf("a2", l)}, buf("y2", l), buf("a2", l));
            e.emit(Opcode::CONV_F2, {buf("y2", l)}, buf("f2", l));
            e.emit(Opcode::ADD, {x1, buf("f2", l)}, buf("a1", l));
            e.emit(Opcode::RELU, {buf("a1", l)}, buf("y1", l), buf("a1", l));
        } else {
            e.emit(Opcode::ADD, add2, buf("y2", l), x2);
            e.emit(Opcode::CONV_F2, {buf("y2", l)}, buf("f2", l));
            e.emit(Opcode::ADD, {x1, buf("f2", l)}, buf("y1", l), x1);
        }
    }
    e.emit(Opcode::POOL, {buf("y1", L), buf("y2", L)}, "feat");
}

inline void emit_loss_grad(Emitter& e) {
    const std::size_t L = e.dims().depth();
    e.emit(Opcode::LOSS_GRAD, {"feat"}, buf("g1", L));
    e.emit(Opcode::LOSS_GRAD, {"feat"}, buf("g2", L));
}

inline void emit_backward_body(Emitter& e) {
    const auto& d = e.dims();
    const std::size_t L = d.depth();
    const Variant v = d.variant;
    for (std::size_t l = L; l >= 1; --l) {
        const std::string y1 = buf("y1", l), y2 = buf("y2", l), g1 = buf("g1", l), g2 = buf("g2", l);
        const std::string x1 = buf("y1", l - 1), x2 = buf("y2", l - 1);
        const std::string m = buf("g2", l - 1), s = buf("g1", l - 1);
        const std::string f1 = buf("f1", l), f2 = buf("f2", l), t1 = buf("t1", l), t2 = buf("t2", l);
        if (v == Variant::FI) {
            const std::string ga1 = buf("ga1", l), d2 = buf("d2", l);
            e.emit(Opcode::RELU_GRAD, {g1, y1}, ga1, g1);
            e.emit(Opcode::INVGRAD_U2A, {ga1, f2}, t2);
            e.emit(Opcode::ADD, {g2, t2}, d2, g2);
            e.emit(Opcode::WGRAD_U2W, {ga1, f2, y2}, buf("q2", l));
            e.emit(Opcode::RELU_GRAD, {d2, y2}, m, d2);
            if (l > 1) {
                e.emit(Opcode::INVGRAD_U1A, {m, f1}, t1);
                e.emit(Opcode::ADD, {ga1, t1}, s, ga1);
            }
            e.emit(Opcode::WGRAD_U1W, {m, f1, x1}, buf("q1", l));
            continue;
        }
        e.emit(Opcode::RECOMPUTE_F2, {y2}, f2);
        e.emit(Opcode::SUB, {y1, f2}, x1, y1);
        e.emit(Opcode::INVGRAD_U2A, {g1, f2}, t2);
        e.emit(Opcode::ADD, {g2, t2}, m, g2);
        e.emit(Opcode::WGRAD_U2W, {g1, f2, y2}, buf("q2", l));
        e.emit(Opcode::RECOMPUTE_F1, {x1}, f1);
        if (l > 1) {
            std::vector<std::string> sub = {y2, f1};
            if (has_block_injections(v)) sub.push_back(buf("u", l));
            e.emit(Opcode::SUB, sub, x2, y2);
            e.emit(Opcode::INVGRAD_U1A, {m, f1}, t1);
            e.emit(Opcode::ADD, {g1, t1}, s, g1);
        }
        e.emit(Opcode::WGRAD_U1W, {m, f1, x1}, buf("q1", l));
    }
}

/// Buffers the standalone backward pass finds in memory at its start.
inline void emit_backward_loads(Emitter& e) {
    const auto& d = e.dims();
    const std::size_t L = d.depth();
    if (d.variant == Variant::FI) {
        e.emit(Opcode::LOAD, {}, "y1.0");
        for (std::size_t l = 1; l <= L; ++l) {
            e.emit(Opcode::LOAD, {}, buf("f1", l));
            e.emit(Opcode::LOAD, {}, buf("y2", l));
            e.emit(Opcode::LOAD, {}, buf("f2", l));
            e.emit(Opcode::LOAD, {}, buf("y1", l));
        }
    } else {
        e.emit(Opcode::LOAD, {}, buf("y1", L));
        e.emit(Opcode::LOAD, {}, buf("y2", L));
        if (has_block_injections(d.variant))
            for (std::size_t l = 2; l <= L; ++l) e.emit(Opcode::LOAD, {}, buf("u", l));
    }
    e.emit(Opcode::LOAD, {}, "feat");
}

} // namespace detail

inline Schedule emit_forward_schedule(const NetworkDims& d) {
    detail::Emitter e(d, Pass::Forward);
    detail::emit_forward(e);
    Schedule s = e.take();
    validate_schedule(s);
    return s;
}

inline Schedule emit_backward_schedule(const NetworkDims& d) {
    detail::Emitter e(d, Pass::Backward);
    detail::emit_backward_loads(e);
    detail::emit_loss_grad(e);
    detail::emit_backward_body(e);
    Schedule s = e.take();
    validate_schedule(s);
    return s;
}

/// Forward, loss gradient and backward back to back.
inline Schedule emit_iteration_schedule(const NetworkDims& d) {
    detail::Emitter e(d, Pass::Iteration);
    detail::emit_forward(e);
    detail::emit_loss_grad(e);
    detail::emit_backward_body(e);
    Schedule s = e.take();
    validate_schedule(s);
    return s;
}

inline Schedule emit_forward_schedule(const DuDnnSpec& spec, std::size_t batch = 1) {
    return emit_forward_schedule(network_dims(spec, batch));
}
inline Schedule emit_backward_schedule(const DuDnnSpec& spec, std::size_t batch = 1) {
    return emit_backward_schedule(network_dims(spec, batch));
}

// ---------------------------------------------------------------------------
// Text form: `OPCODE in1,in2 -> out [overwrite buf]`

inline std::string to_text(const Instruction& ins) {
    std::string line(to_string(ins.op));
    line += ' ';
    for (std::size_t i = 0; i < ins.inputs.size(); ++i) {
        if (i) line += ',';
        line += ins.inputs[i];
    }
    if (!ins.inputs.empty()) line += ' ';
    line += "-> " + ins.output;
    if (ins.overwrite) line += " [overwrite " + *ins.overwrite + "]";
    return line;
}

inline std::string to_text(const Schedule& s) {
    std::string out;
    for (const auto& ins : s.code) out += to_text(ins) + "\n";
    return out;
}

inline Instruction parse_instruction(std::string_view line) {
    std::istringstream is{std::string(line)};
    std::string op, tok;
    is >> op;
    Instruction ins;
    ins.op = parse_opcode(op);
    if (!(is >> tok)) throw ScheduleError("malformed instruction: '" + std::string(line) + "'");
    if (tok != "->") {
        std::stringstream parts(tok);
        std::string name;
        while (std::getline(parts, name, ','))
            if (!name.empty()) ins.inputs.push_back(name);
        if (!(is >> tok) || tok != "->") throw ScheduleError("missing '->' in: '" + std::string(line) + "'");
    }
    if (!(is >> ins.output)) throw ScheduleError("missing output in: '" + std::string(line) + "'");
    if (is >> tok) {
        std::string target;
        if (tok != "[overwrite" || !(is >> target) || target.size() < 2 || target.back() != ']')
            throw ScheduleError("malformed overwrite clause in: '" + std::string(line) + "'");
        target.pop_back();
        ins.overwrite = target;
    }
    return ins;
}

inline std::vector<Instruction> parse_schedule_text(std::string_view text) {
    std::vector<Instruction> out;
    std::istringstream is{std::string(text)};
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        out.push_back(parse_instruction(line));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Latency and traces

inline Tick op_latency(const Instruction& ins, const NetworkDims& d, const LatencyModel& lm) {
    ConvRole role{};
    enum { Fwd, InGrad, WGrad } kind{};
    switch (ins.op) {
    case Opcode::CONV_G: role = ConvRole::G, kind = Fwd; break;
    case Opcode::CONV_F1:
    case Opcode::RECOMPUTE_F1: role = ConvRole::F1, kind = Fwd; break;
    case Opcode::CONV_F2:
    case Opcode::RECOMPUTE_F2: role = ConvRole::F2, kind = Fwd; break;
    case Opcode::INVGRAD_U1A: role = ConvRole::F1, kind = InGrad; break;
    case Opcode::INVGRAD_U2A: role = ConvRole::F2, kind = InGrad; break;
    case Opcode::WGRAD_U1W: role = ConvRole::F1, kind = WGrad; break;
    case Opcode::WGRAD_U2W: role = ConvRole::F2, kind = WGrad; break;
    default: return 0;
    }
    const std::size_t l = block_of(ins.output);
    if (l < 1 || l > d.depth()) throw ScheduleError("latency: no block for '" + ins.output + "'");
    const auto& b = d.blocks[l - 1];
    const ConvLayerDims& c = role == ConvRole::G ? b.g : role == ConvRole::F1 ? b.f1 : b.f2;
    if (lm.mode == systolic::CycleMode::Analytical) return static_cast<Tick>(op_workload(c, d.batch, lm.macs));
    const systolic::ConvDims cd{d.batch, c.in_channels, c.out_channels, c.height, c.width, c.kernel};
    systolic::ArrayConfig arr = lm.array;
    systolic::MatmulJob job;
    switch (kind) {
    case Fwd:
        arr.dataflow = systolic::Dataflow::WS_FORWARD;
        job = systolic::conv_forward_job(cd, arr.group_size);
        break;
    case InGrad:
        arr.dataflow = systolic::Dataflow::WS_BACKWARD_TRANSPOSED;
        job = systolic::conv_input_grad_job(cd, arr.group_size);
        break;
    case WGrad:
        arr.dataflow = systolic::Dataflow::ACCUM_STATIONARY;
        job = systolic::conv_weight_grad_job(cd, arr.group_size);
        break;
    }
    return static_cast<Tick>(systolic::cycles(job, arr, systolic::CycleMode::Detailed));
}

enum class Access { READ, WRITE };

struct AccessEvent {
    std::string buffer;
    Access kind = Access::READ;
    Tick time = 0;
    std::size_t instruction = 0;

    friend bool operator==(const AccessEvent&, const AccessEvent&) = default;
};

struct AccessTrace {
    std::vector<AccessEvent> events;
    std::vector<Tick> start; // per instruction
    std::vector<Tick> latency;
    Tick end_time = 0;
    double seconds_per_tick = 1.0;
};

/// Serial execution: instruction i occupies [t, t + T_op); reads at t, write at t + T_op.
inline AccessTrace simulate_trace(const Schedule& s, const NetworkDims& d, const LatencyModel& lm) {
    AccessTrace tr;
    tr.seconds_per_tick = lm.seconds_per_tick();
    Tick t = 0;
    for (std::size_t i = 0; i < s.code.size(); ++i) {
        const auto& ins = s.code[i];
        const Tick lat = op_latency(ins, d, lm);
        tr.start.push_back(t);
        tr.latency.push_back(lat);
        for (const auto& in : ins.inputs) tr.events.push_back({in, Access::READ, t, i});
        t += lat;
        tr.events.push_back({ins.output, Access::WRITE, t, i});
    }
    tr.end_time = t;
    return tr;
}

/// Per buffer: max over reads of (read time - most recent prior write).
inline std::map<std::string, Tick> measured_lifetimes(const AccessTrace& tr) {
    std::map<std::string, Tick> life;
    std::unordered_map<std::string, Tick> last_write;
    for (const auto& ev : tr.events) {
        if (ev.kind == Access::WRITE) {
            last_write[ev.buffer] = ev.time;
            life.try_emplace(ev.buffer, 0);
            continue;
        }
        auto it = last_write.find(ev.buffer);
        if (it == last_write.end()) throw ScheduleError("trace: read of '" + ev.buffer + "' before any write");
        Tick& v = life[ev.buffer];
        v = std::max(v, ev.time - it->second);
    }
    return life;
}

// ---------------------------------------------------------------------------
// Lifetime reports

struct LifetimeReport {
    std::map<std::string, Tick> forward;  // transient buffers only
    std::map<std::string, Tick> backward;
    Tick t_f = 0;
    Tick t_b = 0;
    Tick t_data = 0;
    double seconds_per_tick = 1.0;

    [[nodiscard]] double us(Tick t) const { return static_cast<double>(t) * seconds_per_tick * 1e6; }
};

inline Tick max_value(const std::map<std::string, Tick>& m) {
    Tick v = 0;
    for (const auto& [k, t] : m) v = std::max(v, t);
    return v;
}

inline std::map<std::string, Tick> transient_only(const std::map<std::string, Tick>& all, const Schedule& s) {
    std::map<std::string, Tick> out;
    for (const auto& [k, v] : all)
        if (!s.is_static(k)) out.emplace(k, v);
    return out;
}

/// Lifetimes measured on the forward and backward traces.
inline LifetimeReport measured_report(const NetworkDims& d, const LatencyModel& lm) {
    const Schedule fs = emit_forward_schedule(d);
    const Schedule bs = emit_backward_schedule(d);
    LifetimeReport r;
    r.seconds_per_tick = lm.seconds_per_tick();
    r.forward = transient_only(measured_lifetimes(simulate_trace(fs, d, lm)), fs);
    r.backward = transient_only(measured_lifetimes(simulate_trace(bs, d, lm)), bs);
    r.t_f = max_value(r.forward);
    r.t_b = max_value(r.backward);
    r.t_data = std::max(r.t_f, r.t_b);
    return r;
}

/// Per-block operator latencies.
struct BlockLatency {
    Tick g = 0, f1 = 0, f2 = 0;       // forward convolutions (and recomputation)
    Tick u1a = 0, u1w = 0, u2a = 0, u2w = 0;
};

inline std::vector<BlockLatency> block_latencies(const NetworkDims& d, const LatencyModel& lm) {
    std::vector<BlockLatency> out(d.depth() + 1); // index 0 unused
    for (std::size_t l = 1; l <= d.depth(); ++l) {
        auto lat = [&](Opcode op, std::string_view stem) { return op_latency({op, {}, buf(stem, l), {}}, d, lm); };
        auto& b = out[l];
        b.g = has_backbone(d.variant) ? lat(Opcode::CONV_G, "h") : 0;
        b.f1 = lat(Opcode::CONV_F1, "f1");
        b.f2 = lat(Opcode::CONV_F2, "f2");
        b.u1a = lat(Opcode::INVGRAD_U1A, "t1");
        b.u1w = lat(Opcode::WGRAD_U1W, "q1");
        b.u2a = lat(Opcode::INVGRAD_U2A, "t2");
        b.u2w = lat(Opcode::WGRAD_U2W, "q2");
    }
    return out;
}

/// Closed-form lifetimes of the reversible schedules above (DuDNN, CA, BO),
/// every transient buffer.
inline LifetimeReport closed_form_lifetimes(const NetworkDims& d, const LatencyModel& lm) {
    if (!is_reversible(d.variant)) throw ScheduleError("closed form: only reversible variants have one");
    d.validate();
    const auto T = block_latencies(d, lm);
    const std::size_t L = d.depth();
    const bool dudnn = has_block_injections(d.variant);
    LifetimeReport r;
    r.seconds_per_tick = lm.seconds_per_tick();
    auto& F = r.forward;
    auto& B = r.backward;

    // forward: block l spans G_l (DuDNN only) + F1_l + F2_l
    auto G = [&](std::size_t l) { return dudnn ? T[l].g : Tick{0}; };
    F["in"] = 0;
    F["feat"] = 0;
    if (has_backbone(d.variant))
        for (std::size_t l = 1; l <= L; ++l) F[buf("h", l)] = (dudnn && l < L) ? T[l].f1 + T[l].f2 : 0;
    for (std::size_t j = 0; j <= L; ++j) {
        F[buf("y1", j)] = j < L ? G(j + 1) + T[j + 1].f1 + T[j + 1].f2 : 0;
        if (j == 0)
            F[buf("y2", j)] = G(1) + T[1].f1;
        else
            F[buf("y2", j)] = T[j].f2 + (j < L ? G(j + 1) + T[j + 1].f1 : 0);
    }
    for (std::size_t l = 1; l <= L; ++l) {
        F[buf("f1", l)] = 0;
        F[buf("f2", l)] = 0;
    }

    // backward, block l: F2 | U2a | U2w | F1 | U1a | U1w  (U1a absent at l = 1)
    auto a = [&](std::size_t l) { return T[l].f2; };
    auto ab = [&](std::size_t l) { return T[l].f2 + T[l].u2a; };
    auto Q = [&](std::size_t l) { return T[l].f2 + T[l].u2a + T[l].u2w + T[l].f1; };
    auto P = [&](std::size_t l) { return Q(l) + (l > 1 ? T[l].u1a : 0) + T[l].u1w; };
    B["feat"] = 0;
    for (std::size_t j = L; j >= 1; --j) {
        const bool top = j == L;
        const std::size_t p = j + 1;
        const Tick y2_last = j >= 2 ? Q(j) : ab(j);
        const Tick g1_last = j >= 2 ? Q(j) + T[j].u1a : ab(j);
        B[buf("y1", j)] = (top ? 0 : P(p) - a(p)) + a(j);
        B[buf("y2", j)] = (top ? 0 : P(p) - Q(p)) + y2_last;
        B[buf("g2", j)] = (top ? 0 : P(p) - ab(p)) + ab(j);
        B[buf("g1", j)] = (top ? 0 : P(p) - Q(p) - T[p].u1a) + g1_last;
        B[buf("f2", j)] = T[j].u2a;
        B[buf("t2", j)] = 0;
        B[buf("f1", j)] = j >= 2 ? T[j].u1a : 0;
        if (j >= 2) B[buf("t1", j)] = 0;
    }
    B["y1.0"] = T[1].u2a + T[1].u2w + T[1].f1;
    B["g2.0"] = T[1].u2w + T[1].f1;

    r.t_f = max_value(F);
    r.t_b = max_value(B);
    r.t_data = std::max(r.t_f, r.t_b);
    return r;
}

/// The lifetime expressions as printed in the literature this model follows,
/// with out-of-range l-1 / l+1 terms dropped at the boundary layers. They do
/// not correspond to a dependency-respecting schedule (see README), so they
/// are reported next to the derived values, never in place of them.
struct PrintedLifetimes {
    std::vector<Tick> f_y1, f_y2, f_y3;       // index 1..L
    std::vector<Tick> b_g1, b_g2, b_y1, b_y2; // index 1..L
    Tick t_f = 0, t_b = 0, t_data = 0;
};

inline PrintedLifetimes printed_lifetimes(const NetworkDims& d, const LatencyModel& lm) {
    d.validate();
    const auto T = block_latencies(d, lm);
    const std::size_t L = d.depth();
    auto at = [&](std::size_t l) -> BlockLatency { return (l >= 1 && l <= L) ? T[l] : BlockLatency{}; };
    PrintedLifetimes p;
    for (auto* v : {&p.f_y1, &p.f_y2, &p.f_y3, &p.b_g1, &p.b_g2, &p.b_y1, &p.b_y2}) v->assign(L + 1, 0);
    for (std::size_t l = 1; l <= L; ++l) {
        const auto c = at(l), n = at(l + 1), pr = at(l - 1);
        p.f_y3[l] = c.g + c.f1 + c.f2;
        p.f_y1[l] = c.f1 + n.g + n.f2;
        p.f_y2[l] = c.f1 + c.f2 + n.g + n.f2;
        p.b_g1[l] = c.u1a + pr.u2w + pr.u2a + pr.f2 + pr.u1w;
        p.b_g2[l] = c.u2a + c.f2 + c.u1w;
        p.b_y1[l] = c.f2 + c.u1w + c.u1a + pr.u2w + pr.u2a;
        p.b_y2[l] = p.b_y1[l];
        p.t_f = std::max({p.t_f, p.f_y1[l], p.f_y2[l], p.f_y3[l]});
        p.t_b = std::max({p.t_b, p.b_g1[l], p.b_g2[l], p.b_y1[l], p.b_y2[l]});
    }
    p.t_data = std::max(p.t_f, p.t_b);
    return p;
}

// ---------------------------------------------------------------------------
// Memory footprint

/// Storage of a tensor as BFP groups along the channel axis.
inline std::uint64_t buffer_bytes(const Shape4& s, const bfp::BfpConfig& cfg = {}) {
    const std::uint64_t groups = static_cast<std::uint64_t>(s.n) * s.h * s.w *
                                 kernels::ceil_div(s.c, static_cast<std::size_t>(cfg.group_size));
    return (groups * static_cast<std::uint64_t>(cfg.encoded_size_bits()) + 7) / 8;
}

/// One stored value of a buffer between a write and its last read before the next write.
struct LiveInterval {
    std::string buffer;
    std::size_t write_instr = 0;
    std::size_t last_read_instr = 0; // == write_instr when never read
    bool is_static = false;
    std::uint64_t bytes = 0;
};

inline std::vector<LiveInterval> live_intervals(const Schedule& s, const bfp::BfpConfig& cfg = {}) {
    std::vector<LiveInterval> out;
    std::unordered_map<std::string, std::size_t> open;
    for (std::size_t i = 0; i < s.code.size(); ++i) {
        const auto& ins = s.code[i];
        for (const auto& in : ins.inputs) {
            auto it = open.find(in);
            if (it == open.end()) throw ScheduleError("live_intervals: read of '" + in + "' before write");
            out[it->second].last_read_instr = i;
        }
        if (ins.overwrite) open.erase(*ins.overwrite);
        const auto& info = s.buffers.at(ins.output);
        open[ins.output] = out.size();
        out.push_back({ins.output, i, i, info.is_static, buffer_bytes(info.shape, cfg)});
    }
    return out;
}

/// Peak bytes of live transient buffers, walking the program in order; an
/// overwriting instruction reuses the storage of its overwrite target.
inline std::uint64_t peak_memory(const Schedule& s, const bfp::BfpConfig& cfg = {}) {
    const auto iv = live_intervals(s, cfg);
    std::vector<std::vector<std::size_t>> born(s.code.size()), dies(s.code.size());
    for (std::size_t k = 0; k < iv.size(); ++k) {
        if (iv[k].is_static) continue;
        born[iv[k].write_instr].push_back(k);
        dies[iv[k].last_read_instr].push_back(k);
    }
    std::unordered_map<std::string, std::size_t> current; // buffer -> interval
    std::vector<bool> alive(iv.size(), false);
    std::uint64_t live = 0, peak = 0;
    for (std::size_t i = 0; i < s.code.size(); ++i) {
        const auto& ins = s.code[i];
        if (ins.overwrite) {
            auto it = current.find(*ins.overwrite);
            if (it != current.end() && alive[it->second]) {
                alive[it->second] = false;
                live -= iv[it->second].bytes;
            }
        }
        for (auto k : born[i]) {
            alive[k] = true;
            live += iv[k].bytes;
            current[iv[k].buffer] = k;
        }
        peak = std::max(peak, live);
        for (auto k : dies[i])
            if (alive[k]) {
                alive[k] = false;
                live -= iv[k].bytes;
            }
    }
    return peak;
}

/// Bytes of all learnable and frozen weights described by `d` (static storage).
inline std::uint64_t weight_bytes(const NetworkDims& d, const bfp::BfpConfig& cfg = {}) {
    std::uint64_t total = 0;
    auto w = [&](const ConvLayerDims& c) {
        return buffer_bytes(Shape4{c.out_channels * c.kernel * c.kernel, c.in_channels, 1, 1}, cfg);
    };
    for (const auto& b : d.blocks) {
        total += w(b.f1) + w(b.f2);
        if (has_backbone(d.variant)) total += w(b.g);
    }
    return total;
}

// ---------------------------------------------------------------------------
// Replay: executes a schedule with duplex-engine semantics (exact arithmetic).

/// Returns the loss gradient wrt the logits for the given classifier input.
using LossGradFn = std::function<Tensor(const Tensor& features)>;

struct ReplayResult {
    std::map<std::string, Tensor> buffers; // every buffer still live at the end
};

inline ReplayResult replay(const Schedule& s, const DuDnnModel& m, const std::map<std::string, Tensor>& loads,
                           const LossGradFn& loss_grad = {}) {
    if (s.variant != m.spec.variant) throw ScheduleError("replay: schedule and model variants differ");
    ReplayResult r;
    auto& B = r.buffers;
    std::set<std::string> dead;
    std::optional<std::pair<Tensor, Tensor>> dy_split;
    auto get = [&](const std::string& n) -> const Tensor& {
        if (dead.count(n)) throw ScheduleError("replay: read of overwritten buffer '" + n + "'");
        auto it = B.find(n);
        if (it == B.end()) throw ScheduleError("replay: read of unwritten buffer '" + n + "'");
        return it->second;
    };
    const Numerics exact;
    for (const auto& ins : s.code) {
        std::vector<const Tensor*> in;
        for (const auto& n : ins.inputs) in.push_back(&get(n));
        const std::size_t l = block_of(ins.output);
        auto branch = [&]() -> const ReversibleBlockParams& { return m.branch.at(l - 1); };
        const std::string stem(stem_of(ins.output));
        Tensor out;
        switch (ins.op) {
        case Opcode::LOAD: {
            auto it = loads.find(ins.output);
            if (it == loads.end()) throw ScheduleError("replay: no value supplied for LOAD '" + ins.output + "'");
            out = it->second;
            break;
        }
        case Opcode::POOL:
            if (ins.output == "feat")
                out = kernels::global_avg_pool(kernels::concat_channels(*in.at(0), *in.at(1)));
            else if (ins.output == "y1.0")
                out = pool_project(*in.at(0), m.stem_proj1, m.spec.pool_factor, exact);
            else if (ins.output == "y2.0")
                out = pool_project(*in.at(0), m.stem_proj2, m.spec.pool_factor, exact);
            else if (stem == "u")
                out = pool_project(*in.at(0), m.injection_proj.at(l - 1), m.spec.pool_factor, exact);
            else
                throw ScheduleError("replay: POOL into unexpected buffer '" + ins.output + "'");
            break;
        case Opcode::CONV_G: out = apply_residual_func(m.backbone.at(l - 1), *in.at(0)); break;
        case Opcode::CONV_F1:
        case Opcode::RECOMPUTE_F1: out = apply_residual_func(branch().f1, *in.at(0)); break;
        case Opcode::CONV_F2:
        case Opcode::RECOMPUTE_F2: out = apply_residual_func(branch().f2, *in.at(0)); break;
        case Opcode::ADD:
            out = *in.at(0);
            for (std::size_t k = 1; k < in.size(); ++k) out += *in[k];
            break;
        case Opcode::SUB:
            out = *in.at(0);
            for (std::size_t k = 1; k < in.size(); ++k) out -= *in[k];
            break;
        case Opcode::RELU:
            out = *in.at(0);
            kernels::relu_inplace(out);
            break;
        case Opcode::RELU_GRAD: out = kernels::relu_mask(*in.at(0), *in.at(1)); break;
        case Opcode::INVGRAD_U1A: out = residual_input_grad(branch().f1, *in.at(0), *in.at(1)); break;
        case Opcode::INVGRAD_U2A: out = residual_input_grad(branch().f2, *in.at(0), *in.at(1)); break;
        case Opcode::WGRAD_U1W: out = residual_weight_grad(branch().f1, *in.at(2), *in.at(0), *in.at(1)); break;
        case Opcode::WGRAD_U2W: out = residual_weight_grad(branch().f2, *in.at(2), *in.at(0), *in.at(1)); break;
        case Opcode::LOSS_GRAD: {
            if (!loss_grad) throw ScheduleError("replay: LOSS_GRAD needs a loss gradient function");
            if (!dy_split) {
                const Tensor& feat = *in.at(0);
                const Tensor dl = loss_grad(feat);
                const auto& fs = feat.shape();
                Tensor dfeat(fs);
                for (std::size_t n = 0; n < fs.n; ++n)
                    for (std::size_t k = 0; k < m.spec.num_classes; ++k)
                        for (std::size_t c = 0; c < fs.c; ++c)
                            dfeat.at(n, c, 0, 0) += dl.at(n, k, 0, 0) * m.head_weight.at(k, c, 0, 0);
                const auto& ys = s.buffers.at(ins.output).shape;
                dy_split = kernels::split_channels(kernels::global_avg_pool_grad(dfeat, ys.h, ys.w), ys.c);
            }
            out = stem == "g1" ? dy_split->first : dy_split->second;
            break;
        }
        }
        if (ins.overwrite) {
            B.erase(*ins.overwrite);
            dead.insert(*ins.overwrite);
        }
        dead.erase(ins.output);
        B[ins.output] = std::move(out);
    }
    return r;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const LifetimeReport& r) {
    nlohmann::json j;
    j["seconds_per_tick"] = r.seconds_per_tick;
    j["t_f_ticks"] = r.t_f;
    j["t_b_ticks"] = r.t_b;
    j["t_data_ticks"] = r.t_data;
    j["t_f_us"] = r.us(r.t_f);
    j["t_b_us"] = r.us(r.t_b);
    j["t_data_us"] = r.us(r.t_data);
    j["forward"] = r.forward;
    j["backward"] = r.backward;
    return j;
}

inline nlohmann::json to_json(const PrintedLifetimes& p) {
    auto tail = [](const std::vector<Tick>& v) { return std::vector<Tick>(v.begin() + 1, v.end()); };
    return {{"f_y1", tail(p.f_y1)}, {"f_y2", tail(p.f_y2)}, {"f_y3", tail(p.f_y3)}, {"b_g1", tail(p.b_g1)},
            {"b_g2", tail(p.b_g2)}, {"b_y1", tail(p.b_y1)}, {"b_y2", tail(p.b_y2)}, {"t_f", p.t_f},
            {"t_b", p.t_b},         {"t_data", p.t_data}};
}

} // namespace duplexsim::sched
