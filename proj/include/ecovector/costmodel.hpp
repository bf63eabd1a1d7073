#pragma once

// Closed-form memory, operation-count, disk-time and energy models for
// EcoVector and the IVF / PQ / HNSW family it is compared against.
// Times are in milliseconds everywhere except inside energy_joules.

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "ecovector/core.hpp"

namespace ecovector::cost {

enum class Algorithm { kIvf, kIvfPq, kHnsw, kHnswPq, kIvfDisk, kIvfPqDisk, kIvfHnsw, kEcoVector };

inline constexpr std::array<Algorithm, 8> kAllAlgorithms = {
    Algorithm::kIvf,     Algorithm::kIvfPq,     Algorithm::kHnsw,    Algorithm::kHnswPq,
    Algorithm::kIvfDisk, Algorithm::kIvfPqDisk, Algorithm::kIvfHnsw, Algorithm::kEcoVector};

inline std::string_view name(Algorithm a) {
    switch (a) {
        case Algorithm::kIvf: return "IVF";
        case Algorithm::kIvfPq: return "IVFPQ";
        case Algorithm::kHnsw: return "HNSW";
        case Algorithm::kHnswPq: return "HNSWPQ";
        case Algorithm::kIvfDisk: return "IVF-DISK";
        case Algorithm::kIvfPqDisk: return "IVFPQ-DISK";
        case Algorithm::kIvfHnsw: return "IVF-HNSW";
        case Algorithm::kEcoVector: return "EcoVector";
    }
    return "?";
}

struct CostModelParams {
    // Workload and index shape. Each row reads only the symbols it needs.
    std::optional<double> N, N_c, d, n_P;
    std::optional<double> M;        // flat HNSW degree in the memory rows
    std::optional<double> M_prime;  // centroid / per-cluster graph degree
    std::optional<double> M_h;      // flat HNSW degree in the search rows
    std::optional<double> M_pq, nbits;
    std::optional<double> ef_H, ef_c, ef_L;

    // Device constants.
    double t_op_ms = 1.94e-4;
    double T_seek_ms = 0.025;
    double T_cmd_ms = 0.015;
    double T_transfer_ms_per_byte = 3.6e-7;
    double I_s_amps = 2300e-6;
    double I_d_amps = 800e-6;
    double V_volts = 4.0;
};

namespace detail {

inline double need(const std::optional<double>& v, std::string_view sym, Algorithm a) {
    if (!v) fail(ErrorCode::kInvalidArgument, "parameter " + std::string(sym) + " required by " + std::string(name(a)));
    if (!std::isfinite(*v) || *v < 0.0)
        fail(ErrorCode::kInvalidArgument, "parameter " + std::string(sym) + " must be finite and non-negative");
    return *v;
}

inline double positive(const std::optional<double>& v, std::string_view sym, Algorithm a) {
    const double x = need(v, sym, a);
    if (x <= 0.0) fail(ErrorCode::kInvalidArgument, "parameter " + std::string(sym) + " must be positive");
    return x;
}

/// Neighbor-list geometric factor M / (1 - p0) with p0 = 1 / ln(M).
inline double link_factor(double m, std::string_view sym) {
    const double p0 = 1.0 / std::log(m);
    if (!(m > 1.0) || !(p0 < 1.0))
        fail(ErrorCode::kInvalidArgument, "parameter " + std::string(sym) + " must exceed e so that p0 = 1/ln(M) < 1");
    return m / (1.0 - p0);
}

}  // namespace detail

inline double level_probability(double m) { return 1.0 / std::log(m); }

inline double memory_bytes(Algorithm a, const CostModelParams& p) {
    using detail::need;
    using detail::positive;
    switch (a) {
        case Algorithm::kIvf: {
            const double N = need(p.N, "N", a), Nc = need(p.N_c, "N_c", a), d = need(p.d, "d", a);
            return Nc * 4 * d + 8 * N + N * 4 * d;
        }
        case Algorithm::kIvfPq: {
            const double N = need(p.N, "N", a), Nc = need(p.N_c, "N_c", a), d = need(p.d, "d", a);
            const double mpq = need(p.M_pq, "M_pq", a), nb = need(p.nbits, "nbits", a);
            return Nc * 4 * d + 8 * N + N * (mpq * nb / 8) + std::exp2(nb) * 4 * d;
        }
        case Algorithm::kHnsw: {
            const double N = need(p.N, "N", a), d = need(p.d, "d", a);
            const double f = detail::link_factor(positive(p.M, "M", a), "M");
            return N * 4 * d + 4 * N * f;
        }
        case Algorithm::kHnswPq: {
            const double N = need(p.N, "N", a), d = need(p.d, "d", a);
            const double mpq = need(p.M_pq, "M_pq", a), nb = need(p.nbits, "nbits", a);
            const double f = detail::link_factor(positive(p.M, "M", a), "M");
            return N * (mpq * nb / 8) + 4 * N * 4 * f + std::exp2(nb) * 4 * d;
        }
        case Algorithm::kIvfDisk: {
            const double N = need(p.N, "N", a), Nc = need(p.N_c, "N_c", a), d = need(p.d, "d", a);
            return Nc * 4 * d + 8 * N + 4 * d;
        }
        case Algorithm::kIvfPqDisk: {
            const double N = need(p.N, "N", a), Nc = need(p.N_c, "N_c", a), d = need(p.d, "d", a);
            const double mpq = need(p.M_pq, "M_pq", a), nb = need(p.nbits, "nbits", a);
            return Nc * 4 * d + 8 * N + mpq * nb / 8 + std::exp2(nb) * 4 * d;
        }
        case Algorithm::kIvfHnsw: {
            const double N = need(p.N, "N", a), Nc = need(p.N_c, "N_c", a), d = need(p.d, "d", a);
            const double f = detail::link_factor(positive(p.M_prime, "M'", a), "M'");
            return 4 * Nc * (d + f) + 8 * N + 4 * d;
        }
        case Algorithm::kEcoVector: {
            const double N = need(p.N, "N", a), Nc = need(p.N_c, "N_c", a), d = need(p.d, "d", a);
            const double f = detail::link_factor(positive(p.M_prime, "M'", a), "M'");
            return 4 * Nc * (d + f) + 8 * N + 4 * (d + f);
        }
    }
    return 0.0;
}

/// Distance-operation count n_search per query.
inline double search_ops(Algorithm a, const CostModelParams& p) {
    using detail::need;
    using detail::positive;
    switch (a) {
        case Algorithm::kIvf:
        case Algorithm::kIvfDisk: {
            const double Nc = positive(p.N_c, "N_c", a);
            return Nc + need(p.n_P, "n_P", a) * need(p.N, "N", a) / Nc;
        }
        case Algorithm::kIvfPq:
        case Algorithm::kIvfPqDisk: {
            const double Nc = positive(p.N_c, "N_c", a);
            const double scale = need(p.M_pq, "M_pq", a) / positive(p.d, "d", a) * need(p.nbits, "nbits", a) / 8;
            return Nc + need(p.n_P, "n_P", a) * need(p.N, "N", a) / Nc * scale + std::exp2(*p.nbits);
        }
        case Algorithm::kHnsw:
            return need(p.ef_H, "ef_H", a) * need(p.M_h, "M_h", a);
        case Algorithm::kHnswPq: {
            const double scale = need(p.M_pq, "M_pq", a) / positive(p.d, "d", a) * need(p.nbits, "nbits", a) / 8;
            return need(p.ef_H, "ef_H", a) * need(p.M_h, "M_h", a) * scale + std::exp2(*p.nbits);
        }
        case Algorithm::kIvfHnsw: {
            const double Nc = positive(p.N_c, "N_c", a);
            return need(p.ef_c, "ef_c", a) * need(p.M_prime, "M'", a) + need(p.n_P, "n_P", a) * need(p.N, "N", a) / Nc;
        }
        case Algorithm::kEcoVector: {
            const double mp = need(p.M_prime, "M'", a);
            return need(p.ef_c, "ef_c", a) * mp + need(p.n_P, "n_P", a) * need(p.ef_L, "ef_L", a) * mp;
        }
    }
    return 0.0;
}

/// CPU time t_s = n_search * t_op.
inline double cpu_time_ms(double n_search, const CostModelParams& p) {
    if (n_search < 0.0) fail(ErrorCode::kInvalidArgument, "negative operation count");
    return n_search * p.t_op_ms;
}

inline double search_time_ms(Algorithm a, const CostModelParams& p) { return cpu_time_ms(search_ops(a, p), p); }

/// t_d = n_seek * (T_seek + T_cmd + n_byte * T_transfer).
inline double disk_time_ms(double n_seek, double n_byte, const CostModelParams& p) {
    if (n_seek < 0.0 || n_byte < 0.0) fail(ErrorCode::kInvalidArgument, "disk time inputs must be non-negative");
    return n_seek * (p.T_seek_ms + p.T_cmd_ms + n_byte * p.T_transfer_ms_per_byte);
}

/// E = V * (I_s * t_s + I_d * t_d), times given in ms.
inline double energy_joules(double t_s_ms, double t_d_ms, const CostModelParams& p) {
    if (t_s_ms < 0.0 || t_d_ms < 0.0) fail(ErrorCode::kInvalidArgument, "times must be non-negative");
    return p.V_volts * (p.I_s_amps * t_s_ms + p.I_d_amps * t_d_ms) / 1000.0;
}

}  // namespace ecovector::cost
