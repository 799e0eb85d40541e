#ifndef STRONG_APPROX_RNG_HPP
#define STRONG_APPROX_RNG_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace strong_approx {

/// Philox4x32-10 block function (Salmon et al., SC'11). Counter-based: the
/// output depends only on (key, counter), so any trial's stream can be
/// regenerated without touching the others.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
	constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
	constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
	for (int round = 0; round < 10; ++round) {
		const std::uint64_t p0 = std::uint64_t(M0) * ctr[0];
		const std::uint64_t p1 = std::uint64_t(M1) * ctr[2];
		const auto hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
		const auto hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
		ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
		key[0] += W0;
		key[1] += W1;
	}
	return ctr;
}

struct TrialSeed {
	std::uint64_t lo = 0;
	std::uint64_t hi = 0;
};

/// Seed of trial `trial` at n-list position `n_index` under `master`.
inline TrialSeed derive_seed(std::uint64_t master, std::uint64_t n_index, std::uint64_t trial) {
	const auto out = philox4x32({std::uint32_t(trial), std::uint32_t(trial >> 32), std::uint32_t(n_index),
	                             std::uint32_t(n_index >> 32) ^ 0x5EEDu},
	                            {std::uint32_t(master), std::uint32_t(master >> 32)});
	return {std::uint64_t(out[0]) | (std::uint64_t(out[1]) << 32), std::uint64_t(out[2]) | (std::uint64_t(out[3]) << 32)};
}

/// Private random stream of one trial.
class Stream {
public:
	explicit Stream(TrialSeed seed) : seed_(seed) {}

	std::uint64_t next_u64() {
		if (avail_ == 0) {
			const auto out = philox4x32({std::uint32_t(block_), std::uint32_t(block_ >> 32), std::uint32_t(seed_.hi),
			                             std::uint32_t(seed_.hi >> 32)},
			                            {std::uint32_t(seed_.lo), std::uint32_t(seed_.lo >> 32)});
			++block_;
			buf_[0] = std::uint64_t(out[0]) | (std::uint64_t(out[1]) << 32);
			buf_[1] = std::uint64_t(out[2]) | (std::uint64_t(out[3]) << 32);
			avail_ = 2;
		}
		return buf_[2 - avail_--];
	}

	/// Uniform on (0, 1]; never returns 0.
	double uniform() { return (double(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

	/// Standard normal via Box-Muller, pairs cached.
	double normal() {
		if (has_spare_) {
			has_spare_ = false;
			return spare_;
		}
		const double r = std::sqrt(-2.0 * std::log(uniform()));
		const double theta = 2.0 * std::numbers::pi * uniform();
		spare_ = r * std::sin(theta);
		has_spare_ = true;
		return r * std::cos(theta);
	}

	TrialSeed seed() const { return seed_; }

private:
	TrialSeed seed_;
	std::uint64_t block_ = 0;
	std::array<std::uint64_t, 2> buf_{};
	int avail_ = 0;
	double spare_ = 0.0;
	bool has_spare_ = false;
};

} // namespace strong_approx

#endif
