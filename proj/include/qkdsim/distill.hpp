#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "qkdsim/core.hpp"
#include "qkdsim/rng.hpp"

#if defined(__PCLMUL__)
#include <emmintrin.h>
#include <wmmintrin.h>
#endif

namespace qkdsim {

// One byte per bit; packed words are used internally where it matters.
using BitVec = std::vector<std::uint8_t>;

inline BitVec random_bits(std::int64_t n, RngStream& rng) {
  BitVec bits(static_cast<std::size_t>(n));
  std::int64_t i = 0;
  while (i < n) {
    std::uint64_t w = rng.word();
    const std::int64_t stop = std::min<std::int64_t>(n, i + 64);
    for (; i < stop; ++i) {
      bits[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(w & 1u);
      w >>= 1;
    }
  }
  return bits;
}

/// LSB-first packing: bit j lands in word j/64 at position j%64.
inline std::vector<std::uint64_t> pack_bits(const BitVec& bits) {
  std::vector<std::uint64_t> words((bits.size() + 63) / 64, 0);
  for (std::size_t j = 0; j < bits.size(); ++j) {
    if (bits[j]) words[j / 64] |= std::uint64_t{1} << (j % 64);
  }
  return words;
}

inline std::uint64_t fnv1a64(const BitVec& bits) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bits) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct SiftedBlock {
  BitVec alice;
  BitVec bob;
  int channel_index = -1;
  std::int64_t epoch_first = 0;
  std::int64_t epoch_last = 0;

  std::int64_t size() const { return static_cast<std::int64_t>(alice.size()); }
};

/// Keeps exactly the matching-basis positions, order preserved. An empty
/// result is a valid (empty) block, not an error.
inline SiftedBlock sift(const BitVec& alice_bits, const BitVec& alice_bases,
                        const BitVec& bob_bits, const BitVec& bob_bases) {
  const std::size_t n = alice_bits.size();
  if (alice_bases.size() != n || bob_bits.size() != n || bob_bases.size() != n) {
    throw std::invalid_argument("sift: the four streams must have equal length");
  }
  SiftedBlock block;
  for (std::size_t i = 0; i < n; ++i) {
    if (alice_bases[i] == bob_bases[i]) {
      block.alice.push_back(alice_bits[i]);
      block.bob.push_back(bob_bits[i]);
    }
  }
  return block;
}

struct QberEstimate {
  double qber = 0.0;
  SiftedBlock remaining;
  std::int64_t disclosed_bits = 0;
  std::int64_t disagreements = 0;
};

/// Publicly compares a uniform random sample and removes it from the key.
inline QberEstimate estimate_qber(const SiftedBlock& block, double sample_fraction,
                                  RngStream& rng,
                                  std::int64_t sample_floor_bits = 100) {
  const std::int64_t n = block.size();
  if (n == 0) throw EmptyBlockError("estimate_qber: empty block");
  if (!(sample_fraction > 0.0) || !(sample_fraction < 1.0)) {
    throw std::invalid_argument("estimate_qber: sample_fraction must be in (0,1)");
  }
  const std::int64_t sample = std::llround(static_cast<double>(n) * sample_fraction);
  if (sample < sample_floor_bits) {
    throw BlockTooSmallError("estimate_qber: sample of " + std::to_string(sample) +
                             " bits is below the floor of " +
                             std::to_string(sample_floor_bits));
  }

  QberEstimate est;
  est.remaining.channel_index = block.channel_index;
  est.remaining.epoch_first = block.epoch_first;
  est.remaining.epoch_last = block.epoch_last;
  est.remaining.alice.reserve(static_cast<std::size_t>(n - sample));
  est.remaining.bob.reserve(static_cast<std::size_t>(n - sample));
  std::int64_t marked = sample;
  for (std::int64_t i = 0; i < n; ++i) {
    if (detail::take_next(marked, n - i, rng)) {
      --marked;
      ++est.disclosed_bits;
      if (block.alice[i] != block.bob[i]) ++est.disagreements;
    } else {
      est.remaining.alice.push_back(block.alice[i]);
      est.remaining.bob.push_back(block.bob[i]);
    }
  }
  est.qber = static_cast<double>(est.disagreements) / static_cast<double>(sample);
  return est;
}

struct ReconciledBlock {
  BitVec bits;
  std::int64_t leaked_bits = 0;
  std::int64_t disclosed_sample_bits = 0;
  double estimated_qber = 0.0;
};

inline std::int64_t cascade_first_block_size(double qber, std::int64_t n) {
  if (!(qber > 0.0)) throw std::domain_error("cascade block size: qber must be > 0");
  const double k = std::ceil(0.73 / qber);
  return std::clamp<std::int64_t>(static_cast<std::int64_t>(k), 1, n);
}

// Cascade error correction, original four-pass variant: first-pass block
// size 0.73/QBER, doubling each pass; odd-parity blocks are bisected, and
// every corrected bit re-exposes the blocks containing it in earlier passes.
// Leakage counts one bit per disclosed parity (top-level and per bisection
// step). Equality of the final strings is checked with a full-block hash.
inline ReconciledBlock cascade_reconcile(const SiftedBlock& block,
                                         double estimated_qber, RngStream& rng,
                                         int passes = 4) {
  const std::int64_t n = block.size();
  if (n == 0) throw EmptyBlockError("cascade_reconcile: empty block");
  if (!(estimated_qber > 0.0) || estimated_qber > 0.11) {
    throw std::domain_error("cascade_reconcile: estimated qber outside (0, 0.11]");
  }
  if (passes < 1) throw std::invalid_argument("cascade_reconcile: passes must be >= 1");

  const BitVec& alice = block.alice;
  BitVec bob = block.bob;
  std::int64_t leaked = 0;

  struct Pass {
    std::int64_t k = 0;
    std::int64_t nblocks = 0;
    std::vector<std::uint32_t> perm;  // slot -> bit index
    std::vector<std::uint32_t> inv;   // bit index -> slot
    std::vector<std::uint8_t> odd;    // current parity mismatch per block
  };
  std::vector<Pass> plan(static_cast<std::size_t>(passes));
  std::vector<std::vector<std::int64_t>> pending(static_cast<std::size_t>(passes));

  const auto parity_diff = [&](const Pass& ps, std::int64_t slot_lo,
                               std::int64_t slot_hi) {
    int d = 0;
    for (std::int64_t s = slot_lo; s < slot_hi; ++s) {
      const std::uint32_t idx = ps.perm[static_cast<std::size_t>(s)];
      d ^= alice[idx] ^ bob[idx];
    }
    return d;
  };

  const auto bisect_and_fix = [&](int pass_idx, std::int64_t blk, int initialized) {
    Pass& ps = plan[static_cast<std::size_t>(pass_idx)];
    std::int64_t lo = blk * ps.k;
    std::int64_t hi = std::min<std::int64_t>(n, lo + ps.k);
    while (hi - lo > 1) {
      const std::int64_t mid = lo + (hi - lo + 1) / 2;  // left half [lo, mid)
      ++leaked;                                         // left-half parity disclosed
      if (parity_diff(ps, lo, mid)) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    const std::uint32_t idx = ps.perm[static_cast<std::size_t>(lo)];
    bob[idx] ^= 1;
    for (int q = 0; q <= initialized; ++q) {
      Pass& qs = plan[static_cast<std::size_t>(q)];
      const std::int64_t qblk = qs.inv[idx] / qs.k;
      qs.odd[static_cast<std::size_t>(qblk)] ^= 1;
      if (qs.odd[static_cast<std::size_t>(qblk)]) {
        pending[static_cast<std::size_t>(q)].push_back(qblk);
      }
    }
  };

  // Resolve every odd block, cheapest (smallest-block) pass first.
  const auto drain = [&](int initialized) {
    for (;;) {
      int pass_idx = -1;
      std::int64_t blk = -1;
      for (int q = 0; q <= initialized && pass_idx < 0; ++q) {
        auto& stack = pending[static_cast<std::size_t>(q)];
        while (!stack.empty()) {
          const std::int64_t b = stack.back();
          if (plan[static_cast<std::size_t>(q)].odd[static_cast<std::size_t>(b)]) {
            pass_idx = q;
            blk = b;
            break;
          }
          stack.pop_back();
        }
      }
      if (pass_idx < 0) return;
      bisect_and_fix(pass_idx, blk, initialized);
    }
  };

  const std::int64_t k1 = cascade_first_block_size(estimated_qber, n);
  for (int p = 0; p < passes; ++p) {
    Pass& ps = plan[static_cast<std::size_t>(p)];
    ps.k = std::min<std::int64_t>(n, k1 << p);
    ps.nblocks = (n + ps.k - 1) / ps.k;
    ps.perm.resize(static_cast<std::size_t>(n));
    std::iota(ps.perm.begin(), ps.perm.end(), 0u);
    if (p > 0) {
      for (std::int64_t i = n - 1; i > 0; --i) {
        const std::uint64_t j = rng.below(static_cast<std::uint64_t>(i) + 1);
        std::swap(ps.perm[static_cast<std::size_t>(i)],
                  ps.perm[static_cast<std::size_t>(j)]);
      }
    }
    ps.inv.resize(static_cast<std::size_t>(n));
    for (std::int64_t s = 0; s < n; ++s) {
      ps.inv[ps.perm[static_cast<std::size_t>(s)]] = static_cast<std::uint32_t>(s);
    }
    ps.odd.assign(static_cast<std::size_t>(ps.nblocks), 0);
    leaked += ps.nblocks;  // one parity per top-level block
    for (std::int64_t blk = 0; blk < ps.nblocks; ++blk) {
      const std::int64_t lo = blk * ps.k;
      const std::int64_t hi = std::min<std::int64_t>(n, lo + ps.k);
      if (parity_diff(ps, lo, hi)) {
        ps.odd[static_cast<std::size_t>(blk)] = 1;
        pending[static_cast<std::size_t>(p)].push_back(blk);
      }
    }
    drain(p);
  }

  if (fnv1a64(alice) != fnv1a64(bob)) {
    throw ReconciliationError("cascade_reconcile: verification hash mismatch");
  }

  ReconciledBlock out;
  out.bits = std::move(bob);
  out.leaked_bits = leaked;
  out.estimated_qber = estimated_qber;
  return out;
}

enum class RateFormula { IdealBB84, GllpMultiphoton, Calibrated };

struct RateFormulaConfig {
  RateFormula kind = RateFormula::Calibrated;
  double ec_inefficiency_f = 1.1;
  double kappa = 1.0;                   // Calibrated only
  double mu = 0.5;                      // GLLP only
  double detection_prob_per_pulse = 0;  // GLLP only
};

/// Asymptotic secure fraction of a reconciled block at the given QBER.
inline double secure_fraction(const RateFormulaConfig& cfg, double qber) {
  if (!(qber >= 0.0) || qber >= 0.5) {
    throw std::domain_error("secure_fraction: qber must be in [0, 0.5)");
  }
  if (cfg.ec_inefficiency_f < 1.0) throw ConfigError("ec_inefficiency_f must be >= 1");
  const double h = binary_entropy(qber);
  switch (cfg.kind) {
    case RateFormula::IdealBB84:
      return std::max(0.0, 1.0 - cfg.ec_inefficiency_f * h - h);
    case RateFormula::GllpMultiphoton: {
      if (!(cfg.detection_prob_per_pulse > 0.0)) {
        throw ConfigError("GLLP formula needs detection_prob_per_pulse > 0");
      }
      const double p_multi = 1.0 - std::exp(-cfg.mu) * (1.0 + cfg.mu);
      const double omega =
          std::max(0.0, 1.0 - p_multi / cfg.detection_prob_per_pulse);
      if (omega <= 0.0) return 0.0;
      const double e_single = std::min(qber / omega, 0.5);
      return std::max(0.0, omega * (1.0 - binary_entropy(e_single)) -
                               cfg.ec_inefficiency_f * h);
    }
    case RateFormula::Calibrated:
      if (!(cfg.kappa > 0.0) || cfg.kappa > 1.0) {
        throw ConfigError("kappa must be in (0,1]");
      }
      return cfg.kappa * std::max(0.0, 1.0 - cfg.ec_inefficiency_f * h - h);
  }
  return 0.0;
}

/// kappa such that the Calibrated fraction reproduces a target
/// secure/sifted ratio at the given QBER.
inline double calibrate_kappa(double target_ratio, double qber,
                              double ec_inefficiency_f) {
  const double h = binary_entropy(qber);
  const double base = 1.0 - ec_inefficiency_f * h - h;
  if (!(base > 0.0)) {
    throw std::domain_error("calibrate_kappa: ideal fraction is zero at this qber");
  }
  return target_ratio / base;
}

struct SecureKeyBlock {
  BitVec bits;
  BitVec toeplitz_seed;
};

namespace detail {

inline void clmul_accumulate(std::uint64_t a, std::uint64_t b, std::uint64_t& lo,
                             std::uint64_t& hi) {
#if defined(__PCLMUL__)
  const __m128i prod =
      _mm_clmulepi64_si128(_mm_cvtsi64_si128(static_cast<long long>(a)),
                           _mm_cvtsi64_si128(static_cast<long long>(b)), 0x00);
  lo ^= static_cast<std::uint64_t>(_mm_cvtsi128_si64(prod));
  hi ^= static_cast<std::uint64_t>(
      _mm_cvtsi128_si64(_mm_unpackhi_epi64(prod, prod)));
#else
  while (b) {
    const int k = std::countr_zero(b);
    b &= b - 1;
    lo ^= a << k;
    if (k) hi ^= a >> (64 - k);
  }
#endif
}

}  // namespace detail

/// Toeplitz universal hash over GF(2): output bit i is
/// XOR_j seed[i-j+n-1] & input[j]. Computed as a carry-less polynomial
/// product of the input with the seed, reading off coefficients n-1..n+m-2.
inline BitVec toeplitz_amplify(const BitVec& input, std::int64_t m,
                               const BitVec& seed) {
  const std::int64_t n = static_cast<std::int64_t>(input.size());
  if (n == 0) throw EmptyBlockError("toeplitz_amplify: empty input");
  if (m <= 0 || m > n) {
    throw std::invalid_argument("toeplitz_amplify: need 0 < m <= n");
  }
  if (static_cast<std::int64_t>(seed.size()) != n + m - 1) {
    throw std::invalid_argument("toeplitz_amplify: seed length must be n+m-1");
  }
  const std::vector<std::uint64_t> xw = pack_bits(input);
  const std::vector<std::uint64_t> sw = pack_bits(seed);
  std::vector<std::uint64_t> prod(xw.size() + sw.size() + 1, 0);

  // Only word products overlapping the output coefficient window matter.
  const std::int64_t lo_word = (n - 1) / 64;
  const std::int64_t hi_word = (n + m - 2) / 64;
  for (std::size_t i = 0; i < xw.size(); ++i) {
    if (!xw[i]) continue;
    const std::int64_t jlo =
        std::max<std::int64_t>(0, lo_word - static_cast<std::int64_t>(i) - 1);
    const std::int64_t jhi = std::min<std::int64_t>(
        static_cast<std::int64_t>(sw.size()) - 1,
        hi_word - static_cast<std::int64_t>(i));
    for (std::int64_t j = jlo; j <= jhi; ++j) {
      detail::clmul_accumulate(xw[i], sw[static_cast<std::size_t>(j)],
                               prod[i + static_cast<std::size_t>(j)],
                               prod[i + static_cast<std::size_t>(j) + 1]);
    }
  }

  BitVec out(static_cast<std::size_t>(m));
  for (std::int64_t i = 0; i < m; ++i) {
    const std::int64_t bit = n - 1 + i;
    out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(
        (prod[static_cast<std::size_t>(bit / 64)] >> (bit % 64)) & 1u);
  }
  return out;
}

struct DistillConfig {
  double sample_fraction = 0.05;
  std::int64_t sample_floor_bits = 100;
  int cascade_passes = 4;
  // In Calibrated mode the fitted kappa already prices in reconciliation
  // leakage; this flag subtracts it again on top.
  bool subtract_leakage_in_calibrated = false;
};

struct DistillRecord {
  int channel_index = -1;
  double sim_time_s = 0.0;
  std::int64_t sifted_in = 0;
  std::int64_t disclosed_sample_bits = 0;
  double estimated_qber = 0.0;
  std::int64_t reconciled_bits = 0;
  std::int64_t leaked_bits = 0;
  std::int64_t secure_bits = 0;
  double secure_fraction_used = 0.0;
  bool reconciled_ok = false;
};

/// Full pipeline for one block: sample-estimate -> cascade -> privacy
/// amplification. Emits a zero-length key (no reconciliation attempted)
/// when the secure fraction at the estimated QBER is zero.
inline std::pair<SecureKeyBlock, DistillRecord> distill_block(
    const SiftedBlock& sifted, const RateFormulaConfig& rate,
    const DistillConfig& cfg, RngStream& rng) {
  if (sifted.size() == 0) throw EmptyBlockError("distill_block: empty block");

  DistillRecord rec;
  rec.channel_index = sifted.channel_index;
  rec.sifted_in = sifted.size();

  QberEstimate est = estimate_qber(sifted, cfg.sample_fraction, rng,
                                   cfg.sample_floor_bits);
  rec.disclosed_sample_bits = est.disclosed_bits;
  rec.estimated_qber = est.qber;

  const double fraction =
      est.qber >= 0.5 ? 0.0 : secure_fraction(rate, est.qber);
  rec.secure_fraction_used = fraction;
  const std::int64_t n_rem = est.remaining.size();
  if (fraction <= 0.0 || n_rem == 0) {
    return {SecureKeyBlock{}, rec};
  }

  const double q_cascade = std::clamp(est.qber, 5e-4, 0.11);
  ReconciledBlock reconciled =
      cascade_reconcile(est.remaining, q_cascade, rng, cfg.cascade_passes);
  reconciled.disclosed_sample_bits = est.disclosed_bits;
  rec.reconciled_bits = n_rem;
  rec.leaked_bits = reconciled.leaked_bits;
  rec.reconciled_ok = true;

  std::int64_t m =
      static_cast<std::int64_t>(std::floor(static_cast<double>(n_rem) * fraction));
  if (rate.kind != RateFormula::Calibrated || cfg.subtract_leakage_in_calibrated) {
    m -= reconciled.leaked_bits;
  }
  m = std::clamp<std::int64_t>(m, 0, n_rem);
  if (m == 0) {
    return {SecureKeyBlock{}, rec};
  }

  SecureKeyBlock key;
  key.toeplitz_seed = random_bits(n_rem + m - 1, rng);
  key.bits = toeplitz_amplify(reconciled.bits, m, key.toeplitz_seed);
  rec.secure_bits = m;
  return {std::move(key), rec};
}

/// Test/sampling helper: a sifted block with uniformly random key bits and
/// exactly Binomial(n, error_prob) planted disagreements.
inline SiftedBlock synthesize_sifted_block(std::int64_t n, double error_prob,
                                           int channel_index, RngStream& rng) {
  if (n <= 0) throw std::invalid_argument("synthesize_sifted_block: n must be > 0");
  SiftedBlock block;
  block.channel_index = channel_index;
  block.alice = random_bits(n, rng);
  block.bob = block.alice;
  std::int64_t marked = rng.binomial(n, std::clamp(error_prob, 0.0, 1.0));
  for (std::int64_t i = 0; i < n && marked > 0; ++i) {
    if (detail::take_next(marked, n - i, rng)) {
      block.bob[static_cast<std::size_t>(i)] ^= 1;
      --marked;
    }
  }
  return block;
}

}  // namespace qkdsim
