// Base orbits of T(x) = b x mod 1 carried as base-b digit streams.
//
// x_j is the shift of the digit stream by j places, so no rounding error
// accumulates along the base orbit. Doubles are only formed when a point is
// realized, from a window of digits wide enough for full double precision.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <gmp.h>
#include <mpfr.h>

#include <nlohmann/json.hpp>

namespace fibresync {

struct X0Rational {
    std::int64_t p = 0;
    std::int64_t q = 1;
};

/// Decimal expansion, evaluated with at least `bits` of working precision.
struct X0Decimal {
    std::string digits;
    unsigned bits = 256;
};

/// num / (den * pi), evaluated with at least `bits` of working precision.
struct X0PiFraction {
    std::int64_t num = 1;
    std::int64_t den = 1;
    unsigned bits = 256;
};

/// Lebesgue-random x0: i.i.d. uniform digits from a seeded generator.
struct X0Random {
    std::uint64_t seed = 0;
};

using X0Descriptor = std::variant<X0Rational, X0Decimal, X0PiFraction, X0Random>;

inline nlohmann::json x0_to_json(const X0Descriptor& d)
{
    return std::visit(
        [](const auto& v) -> nlohmann::json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, X0Rational>) return {{"rational", {v.p, v.q}}};
            else if constexpr (std::is_same_v<T, X0Decimal>) return {{"decimal", v.digits}, {"bits", v.bits}};
            else if constexpr (std::is_same_v<T, X0PiFraction>) return {{"pi_fraction", {v.num, v.den}}, {"bits", v.bits}};
            else return {{"random", v.seed}};
        },
        d);
}

/// Uniform integer in [0, n) from a 64-bit engine; rejection keeps it exact
/// and identical across standard libraries.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n)
{
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return r % n;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// SplitMix64 finalizer; derives independent per-task seeds from a run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index)
{
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace detail {

class MpzHandle {
public:
    MpzHandle() { mpz_init(v_); }
    ~MpzHandle() { mpz_clear(v_); }
    MpzHandle(const MpzHandle&) = delete;
    MpzHandle& operator=(const MpzHandle&) = delete;
    mpz_ptr get() { return v_; }
    mpz_srcptr get() const { return v_; }

private:
    mpz_t v_;
};

class MpfrHandle {
public:
    explicit MpfrHandle(mpfr_prec_t bits) { mpfr_init2(v_, bits); }
    ~MpfrHandle() { mpfr_clear(v_); }
    MpfrHandle(const MpfrHandle&) = delete;
    MpfrHandle& operator=(const MpfrHandle&) = delete;
    mpfr_ptr get() { return v_; }

private:
    mpfr_t v_;
};

} // namespace detail

class BaseTrajectory {
public:
    BaseTrajectory(int b, X0Descriptor x0) : b_(b), x0_(std::move(x0))
    {
        if (b < 2) throw std::invalid_argument("b must be an integer >= 2");
        window_ = static_cast<std::size_t>(std::ceil(64.0 / std::log2(static_cast<double>(b)))) + 1;
        b_pow_window_ = 1.0L;
        for (std::size_t i = 0; i < window_; ++i) b_pow_window_ *= static_cast<long double>(b_);
        std::visit([this](const auto& v) { init(v); }, x0_);
    }

    BaseTrajectory(BaseTrajectory&&) noexcept = default;
    BaseTrajectory& operator=(BaseTrajectory&&) noexcept = default;

    int base() const { return b_; }
    const X0Descriptor& descriptor() const { return x0_; }
    std::size_t window() const { return window_; }

    /// Working precision in bits used for the digits generated so far
    /// (0 for exact rational and random streams).
    unsigned precision_bits() const { return precision_; }

    /// Digit k of x0 (k = 0 is the first digit after the point), in [0, b).
    std::uint32_t digit(std::size_t k) const
    {
        ensure(k + 1);
        return digits_[k];
    }

    /// Realized x_j = T^j(x0).
    double point(std::size_t j) const
    {
        ensure(j + window_);
        long double acc = 0.0L;
        for (std::size_t k = window_; k-- > 0;) acc = (acc + digits_[j + k]) / b_;
        return static_cast<double>(acc);
    }

    /// Makes sure the first `count` digits exist.
    void ensure(std::size_t count) const
    {
        if (count <= digits_.size()) return;
        std::visit([this, count](const auto& v) { extend(v, count); }, x0_);
    }

    /// Sequential reader holding an integer window of digits.
    class Cursor {
    public:
        explicit Cursor(const BaseTrajectory& t) : t_(&t)
        {
            t_->ensure(t_->window_ + 1);
            lead_ = 1;
            for (std::size_t k = 1; k < t_->window_; ++k) lead_ *= static_cast<unsigned __int128>(t_->b_);
            w_ = 0;
            for (std::size_t k = 0; k < t_->window_; ++k) w_ = w_ * t_->b_ + t_->digits_[k];
        }

        std::size_t index() const { return j_; }
        double point() const { return static_cast<double>(static_cast<long double>(w_) / t_->b_pow_window_); }
        std::uint32_t leading_digit() const { return t_->digits_[j_]; }

        void advance()
        {
            t_->ensure(j_ + t_->window_ + 1);
            w_ = (w_ - static_cast<unsigned __int128>(t_->digits_[j_]) * lead_) * t_->b_ + t_->digits_[j_ + t_->window_];
            ++j_;
        }

    private:
        const BaseTrajectory* t_;
        std::size_t j_ = 0;
        unsigned __int128 w_ = 0;
        unsigned __int128 lead_ = 1;
    };

    Cursor cursor() const { return Cursor(*this); }

private:
    void init(const X0Rational& r)
    {
        if (r.q <= 0) throw std::invalid_argument("rational x0: denominator must be positive");
        std::int64_t rem = r.p % r.q;
        if (rem < 0) rem += r.q;
        rational_rem_ = rem;
    }
    void init(const X0Decimal& d) { regenerate_bits(d.bits, 0); }
    void init(const X0PiFraction& d)
    {
        if (d.den == 0) throw std::invalid_argument("pi_fraction x0: zero denominator");
        regenerate_bits(d.bits, 0);
    }
    void init(const X0Random& r) { rng_.seed(r.seed); }

    void extend(const X0Rational& r, std::size_t count) const
    {
        const auto q = static_cast<unsigned __int128>(r.q);
        while (digits_.size() < count) {
            unsigned __int128 t = static_cast<unsigned __int128>(rational_rem_) * static_cast<unsigned>(b_);
            digits_.push_back(static_cast<std::uint32_t>(t / q));
            rational_rem_ = static_cast<std::int64_t>(t % q);
        }
    }

    void extend(const X0Random&, std::size_t count) const
    {
        digits_.reserve(count);
        while (digits_.size() < count) digits_.push_back(static_cast<std::uint32_t>(uniform_below(rng_, b_)));
    }

    template <typename Explicit>
    void extend(const Explicit& d, std::size_t count) const
    {
        if (count > reliable_digits_) {
            // working precision >= count * log2(b) + 64 bits, doubled to amortize
            double need = static_cast<double>(2 * count + 64) * std::log2(static_cast<double>(b_)) + 64.0;
            regenerate_bits(std::max<unsigned>(d.bits, static_cast<unsigned>(std::ceil(need))), digits_.size());
        }
        generate_fixed(count);
    }

    /// Evaluates x0 to `bits` bits as numerator_ / 2^bits and replays digits
    /// already handed out.
    void regenerate_bits(unsigned bits, std::size_t keep) const
    {
        precision_ = bits;
        detail::MpfrHandle x(bits + 32);
        std::visit(
            [&](const auto& v) {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, X0Decimal>) {
                    if (mpfr_set_str(x.get(), v.digits.c_str(), 10, MPFR_RNDN) != 0)
                        throw std::invalid_argument("decimal x0: cannot parse '" + v.digits + "'");
                } else if constexpr (std::is_same_v<T, X0PiFraction>) {
                    mpfr_const_pi(x.get(), MPFR_RNDN);
                    mpfr_mul_si(x.get(), x.get(), static_cast<long>(v.den), MPFR_RNDN);
                    mpfr_si_div(x.get(), static_cast<long>(v.num), x.get(), MPFR_RNDN);
                }
            },
            x0_);
        // fractional part in [0,1)
        detail::MpfrHandle fl(bits + 32);
        mpfr_floor(fl.get(), x.get());
        mpfr_sub(x.get(), x.get(), fl.get(), MPFR_RNDN);
        mpfr_mul_2ui(x.get(), x.get(), bits, MPFR_RNDN);
        mpfr_get_z(numerator_->get(), x.get(), MPFR_RNDD);

        double log2b = std::log2(static_cast<double>(b_));
        reliable_digits_ = static_cast<std::size_t>(std::floor((bits - 64.0) / log2b));
        std::vector<std::uint32_t> old = std::move(digits_);
        digits_.clear();
        generate_fixed(keep);
        for (std::size_t k = 0; k < keep; ++k)
            if (digits_[k] != old[k]) throw std::runtime_error("digit stream changed under refinement");
    }

    /// Peels digits off numerator_ / 2^precision_ in blocks.
    void generate_fixed(std::size_t count) const
    {
        std::size_t block = 1;
        std::uint64_t bpow = static_cast<std::uint64_t>(b_);
        while (bpow <= std::numeric_limits<std::uint64_t>::max() / static_cast<std::uint64_t>(b_)) {
            bpow *= static_cast<std::uint64_t>(b_);
            ++block;
        }
        detail::MpzHandle head;
        std::vector<std::uint32_t> buf(block);
        digits_.reserve(count);
        while (digits_.size() < count) {
            mpz_mul_ui(numerator_->get(), numerator_->get(), bpow);
            mpz_tdiv_q_2exp(head.get(), numerator_->get(), precision_);
            mpz_tdiv_r_2exp(numerator_->get(), numerator_->get(), precision_);
            std::uint64_t v = mpz_get_ui(head.get());
            for (std::size_t k = block; k-- > 0;) {
                buf[k] = static_cast<std::uint32_t>(v % static_cast<std::uint64_t>(b_));
                v /= static_cast<std::uint64_t>(b_);
            }
            // whole blocks are kept so numerator_ always sits right after digits_
            digits_.insert(digits_.end(), buf.begin(), buf.end());
        }
    }

    int b_;
    X0Descriptor x0_;
    std::size_t window_ = 0;
    long double b_pow_window_ = 1.0L;

    mutable std::vector<std::uint32_t> digits_;
    mutable std::int64_t rational_rem_ = 0;
    mutable std::mt19937_64 rng_;
    mutable std::unique_ptr<detail::MpzHandle> numerator_ = std::make_unique<detail::MpzHandle>();
    mutable unsigned precision_ = 0;
    mutable std::size_t reliable_digits_ = 0;
};

} // namespace fibresync
