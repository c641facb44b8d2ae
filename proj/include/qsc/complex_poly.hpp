#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace qsc {

using cplx = std::complex<double>;

/// Dense polynomial with complex coefficients, ascending degree.
/// The zero polynomial is represented by an empty coefficient list.
class ComplexPoly {
public:
    ComplexPoly() = default;
    explicit ComplexPoly(std::vector<cplx> coeffs) : c_(std::move(coeffs)) { trim(); }
    static ComplexPoly monomial(int k, cplx a = 1.0);

    int degree() const { return static_cast<int>(c_.size()) - 1; }  // -1 for zero poly
    bool is_zero() const { return c_.empty(); }
    cplx coeff(int k) const { return (k >= 0 && k < (int)c_.size()) ? c_[k] : cplx(0); }
    cplx leading() const { return c_.empty() ? cplx(0) : c_.back(); }
    const std::vector<cplx>& coeffs() const { return c_; }

    cplx operator()(cplx x) const;          // Horner
    ComplexPoly derivative() const;

    ComplexPoly operator+(const ComplexPoly& o) const;
    ComplexPoly operator-(const ComplexPoly& o) const;
    ComplexPoly operator*(const ComplexPoly& o) const;
    ComplexPoly operator*(cplx a) const;

    std::string str() const;

private:
    void trim();
    std::vector<cplx> c_;
};

}  // namespace qsc
