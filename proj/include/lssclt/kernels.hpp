// Analytic kernel functions f_l for linear spectral statistics. A closed set
// (identity, integer powers, log, affine, polynomial) so contour placement
// and branch-cut safety stay auditable per kernel.
#pragma once

#include <cmath>
#include <complex>
#include <cstdlib>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lssclt {

class Kernel {
  public:
    enum class Type { identity, power, log, affine, polynomial };

    static Kernel identity() { return Kernel(Type::identity); }
    static Kernel power(int k) {
        if (k < 0) throw std::invalid_argument("kernel: power exponent must be >= 0");
        Kernel f(Type::power);
        f.power_ = k;
        return f;
    }
    static Kernel log() { return Kernel(Type::log); }
    static Kernel affine(double a, double b) {
        Kernel f(Type::affine);
        f.coeffs_ = {b, a};
        return f;
    }
    static Kernel polynomial(std::vector<double> coeffs) {
        if (coeffs.empty()) throw std::invalid_argument("kernel: empty polynomial");
        Kernel f(Type::polynomial);
        f.coeffs_ = std::move(coeffs);
        return f;
    }

    // Config strings: "x", "x^2", "log", "affine:a,b", "poly:c0,c1,...".
    static Kernel parse(const std::string& s) {
        if (s == "x") return identity();
        if (s == "log") return log();
        if (s.rfind("x^", 0) == 0) {
            std::size_t pos = 0;
            int k = std::stoi(s.substr(2), &pos);
            if (pos != s.size() - 2) throw std::invalid_argument("kernel: bad power spec '" + s + "'");
            return power(k);
        }
        if (s.rfind("affine:", 0) == 0) {
            auto vals = parse_csv(s.substr(7));
            if (vals.size() != 2) throw std::invalid_argument("kernel: affine needs 'affine:a,b'");
            return affine(vals[0], vals[1]);
        }
        if (s.rfind("poly:", 0) == 0) return polynomial(parse_csv(s.substr(5)));
        throw std::invalid_argument("kernel: unrecognized spec '" + s + "'");
    }

    Type type() const { return type_; }
    bool requires_positive_domain() const { return type_ == Type::log; }

    std::complex<double> eval(std::complex<double> z) const {
        switch (type_) {
            case Type::identity: return z;
            case Type::power: return ipow(z, power_);
            case Type::log:
                if (z.imag() == 0.0 && z.real() <= 0.0)
                    throw std::domain_error("kernel log: argument on (-inf, 0]");
                return std::log(z);
            case Type::affine: return coeffs_[1] * z + coeffs_[0];
            case Type::polynomial: {
                std::complex<double> acc{0.0, 0.0};
                for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * z + *it;
                return acc;
            }
        }
        return {};
    }

    double eval(double x) const {
        if (type_ == Type::log) {
            if (x <= 0.0) throw std::domain_error("kernel log: argument on (-inf, 0]");
            return std::log(x);
        }
        return eval(std::complex<double>(x, 0.0)).real();
    }

    // Exact analytic derivative at real x.
    double deriv(double x) const {
        switch (type_) {
            case Type::identity: return 1.0;
            case Type::power: return power_ == 0 ? 0.0 : power_ * std::pow(x, power_ - 1);
            case Type::log:
                if (x <= 0.0) throw std::domain_error("kernel log: argument on (-inf, 0]");
                return 1.0 / x;
            case Type::affine: return coeffs_[1];
            case Type::polynomial: {
                double acc = 0.0;
                for (std::size_t k = coeffs_.size(); k-- > 1;) acc = acc * x + k * coeffs_[k];
                return acc;
            }
        }
        return 0.0;
    }

    std::string name() const {
        switch (type_) {
            case Type::identity: return "x";
            case Type::power: return "x^" + std::to_string(power_);
            case Type::log: return "log";
            case Type::affine: {
                std::ostringstream os;
                os << "affine:" << coeffs_[1] << "," << coeffs_[0];
                return os.str();
            }
            case Type::polynomial: {
                std::ostringstream os;
                os << "poly:";
                for (std::size_t i = 0; i < coeffs_.size(); ++i) os << (i ? "," : "") << coeffs_[i];
                return os.str();
            }
        }
        return "?";
    }

  private:
    explicit Kernel(Type t) : type_(t) {}

    static std::complex<double> ipow(std::complex<double> z, int k) {
        std::complex<double> acc{1.0, 0.0};
        for (int i = 0; i < k; ++i) acc *= z;
        return acc;
    }

    static std::vector<double> parse_csv(const std::string& s) {
        std::vector<double> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            std::size_t pos = 0;
            out.push_back(std::stod(item, &pos));
            if (pos != item.size()) throw std::invalid_argument("kernel: bad number '" + item + "'");
        }
        if (out.empty()) throw std::invalid_argument("kernel: empty coefficient list");
        return out;
    }

    Type type_;
    int power_ = 1;
    std::vector<double> coeffs_;  // ascending degree
};

inline std::vector<Kernel> parse_kernels(const std::vector<std::string>& specs) {
    std::vector<Kernel> out;
    out.reserve(specs.size());
    for (const auto& s : specs) out.push_back(Kernel::parse(s));
    return out;
}

struct Assumption6Report {
    double max_deviation = 0.0;  // max |f'(x_n)/f'(y_n) - 1| over the probe grid
    double threshold = 0.05;
    bool pass = false;
};

// Numeric probe of the slow-variation condition on f': x_n = n,
// y_n = n (1 + n^{-1/2}), the relaxed O(1/sqrt(n)) rate. Informational.
inline Assumption6Report assumption6_check(const std::function<double(double)>& fprime,
                                           double n_max = 1e6, double threshold = 0.05) {
    Assumption6Report rep;
    rep.threshold = threshold;
    double dev_at_nmax = 0.0;
    for (double n = 100.0; n <= n_max * 1.0000001; n *= 10.0) {
        const double x = n;
        const double y = n * (1.0 + 1.0 / std::sqrt(n));
        const double fy = fprime(y);
        double dev = (fy == 0.0) ? std::numeric_limits<double>::infinity()
                                 : std::abs(fprime(x) / fy - 1.0);
        if (!std::isfinite(dev)) dev = std::numeric_limits<double>::infinity();
        rep.max_deviation = std::max(rep.max_deviation, dev);
        dev_at_nmax = dev;
    }
    rep.pass = dev_at_nmax <= threshold;
    return rep;
}

inline Assumption6Report assumption6_check(const Kernel& f, double n_max = 1e6,
                                           double threshold = 0.05) {
    return assumption6_check([&f](double x) { return f.deriv(x); }, n_max, threshold);
}

}  // namespace lssclt
