// SPDX-License-Identifier: Apache-2.0
#include "bandfuse/serialize.hpp"

#include <array>
#include <bit>
#include <cstdint>

#include "bandfuse/error.hpp"

namespace bandfuse {

namespace {

constexpr std::string_view kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}

}  // namespace

std::string base64_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t n = (std::uint8_t(bytes[i]) << 16) | (std::uint8_t(bytes[i + 1]) << 8) | std::uint8_t(bytes[i + 2]);
        out += kAlphabet[(n >> 18) & 63];
        out += kAlphabet[(n >> 12) & 63];
        out += kAlphabet[(n >> 6) & 63];
        out += kAlphabet[n & 63];
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        const std::uint32_t n = std::uint8_t(bytes[i]) << 16;
        out += kAlphabet[(n >> 18) & 63];
        out += kAlphabet[(n >> 12) & 63];
        out += "==";
    } else if (rest == 2) {
        const std::uint32_t n = (std::uint8_t(bytes[i]) << 16) | (std::uint8_t(bytes[i + 1]) << 8);
        out += kAlphabet[(n >> 18) & 63];
        out += kAlphabet[(n >> 12) & 63];
        out += kAlphabet[(n >> 6) & 63];
        out += '=';
    }
    return out;
}

std::string base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw ParseError("base64 payload length is not a multiple of 4");
    std::string out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        std::array<int, 4> q{};
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = text[i + k];
            if (c == '=' && i + 4 == text.size() && k >= 2) {
                q[k] = 0;
                ++pad;
                continue;
            }
            if (pad) throw ParseError("base64 padding in the middle of a quantum");
            q[k] = decode_char(c);
            if (q[k] < 0) throw ParseError(std::string("invalid base64 character '") + c + "'");
        }
        const std::uint32_t n = (q[0] << 18) | (q[1] << 12) | (q[2] << 6) | q[3];
        out += static_cast<char>((n >> 16) & 0xFF);
        if (pad < 2) out += static_cast<char>((n >> 8) & 0xFF);
        if (pad < 1) out += static_cast<char>(n & 0xFF);
    }
    return out;
}

std::string encode_f64(std::span<const Scalar> values) {
    std::string bytes(values.size() * 8, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(static_cast<double>(values[i]));
        for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
    return base64_encode(bytes);
}

std::vector<Scalar> decode_f64(std::string_view text) {
    const std::string bytes = base64_decode(text);
    if (bytes.size() % 8 != 0) throw ParseError("float64 payload is not a multiple of 8 bytes");
    std::vector<Scalar> out(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= std::uint64_t(std::uint8_t(bytes[i * 8 + b])) << (8 * b);
        out[i] = static_cast<Scalar>(std::bit_cast<double>(bits));
    }
    return out;
}

nlohmann::json parameters_to_json(const ParameterSet& params) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& p : params.items()) {
        j[p.name] = {{"shape", p.tensor.shape()}, {"data", encode_f64(p.tensor.values())}};
    }
    return j;
}

void parameters_from_json(const nlohmann::json& j, ParameterSet& params) {
    if (j.size() != params.size()) {
        throw DimensionError("checkpoint holds " + std::to_string(j.size()) + " parameters, model has " +
                             std::to_string(params.size()));
    }
    for (const auto& p : params.items()) {
        if (!j.contains(p.name)) throw DimensionError("checkpoint is missing parameter " + p.name);
        const auto& entry = j.at(p.name);
        const auto shape = entry.at("shape").get<Shape>();
        if (shape != p.tensor.shape()) {
            throw DimensionError("parameter " + p.name + " has shape " + shape_str(shape) + " in checkpoint, " +
                                 shape_str(p.tensor.shape()) + " in model");
        }
        auto values = decode_f64(entry.at("data").get<std::string>());
        if (values.size() != p.tensor.numel()) throw DimensionError("parameter " + p.name + " payload size mismatch");
        Tensor t = p.tensor;
        std::copy(values.begin(), values.end(), t.mutable_values().begin());
    }
}

nlohmann::json optimizer_to_json(const Adam& adam, const ParameterSet& params) {
    nlohmann::json m = nlohmann::json::object(), v = nlohmann::json::object();
    const auto& items = params.items();
    for (std::size_t i = 0; i < items.size(); ++i) {
        m[items[i].name] = encode_f64(adam.first_moments()[i]);
        v[items[i].name] = encode_f64(adam.second_moments()[i]);
    }
    const auto& o = adam.options();
    return {{"type", "adam"},
            {"step", adam.steps()},
            {"lr", o.lr},
            {"beta1", o.beta1},
            {"beta2", o.beta2},
            {"eps", o.eps},
            {"m", m},
            {"v", v}};
}

void optimizer_from_json(const nlohmann::json& j, Adam& adam, const ParameterSet& params) {
    std::vector<std::vector<Scalar>> m, v;
    for (const auto& p : params.items()) {
        m.push_back(decode_f64(j.at("m").at(p.name).get<std::string>()));
        v.push_back(decode_f64(j.at("v").at(p.name).get<std::string>()));
    }
    adam.restore(j.at("step").get<std::uint64_t>(), std::move(m), std::move(v));
}

nlohmann::json rng_to_json(const Rng& rng) {
    return {{"algorithm", "splitmix64-counter"}, {"seed", rng.seed()}, {"counter", rng.counter()}};
}

Rng rng_from_json(const nlohmann::json& j) {
    return Rng(j.at("seed").get<std::uint64_t>(), j.at("counter").get<std::uint64_t>());
}

}  // namespace bandfuse
