#include "qsc/complex_poly.hpp"

#include <sstream>

namespace qsc {

ComplexPoly ComplexPoly::monomial(int k, cplx a) {
    std::vector<cplx> c(k + 1, cplx(0));
    c[k] = a;
    return ComplexPoly(std::move(c));
}

void ComplexPoly::trim() {
    while (!c_.empty() && std::abs(c_.back()) == 0.0) c_.pop_back();
}

cplx ComplexPoly::operator()(cplx x) const {
    cplx r(0);
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) r = r * x + *it;
    return r;
}

ComplexPoly ComplexPoly::derivative() const {
    if (c_.size() <= 1) return ComplexPoly();
    std::vector<cplx> d(c_.size() - 1);
    for (size_t k = 1; k < c_.size(); ++k) d[k - 1] = c_[k] * double(k);
    return ComplexPoly(std::move(d));
}

ComplexPoly ComplexPoly::operator+(const ComplexPoly& o) const {
    std::vector<cplx> r(std::max(c_.size(), o.c_.size()), cplx(0));
    for (size_t k = 0; k < c_.size(); ++k) r[k] += c_[k];
    for (size_t k = 0; k < o.c_.size(); ++k) r[k] += o.c_[k];
    return ComplexPoly(std::move(r));
}

ComplexPoly ComplexPoly::operator-(const ComplexPoly& o) const {
    return *this + o * cplx(-1.0);
}

ComplexPoly ComplexPoly::operator*(const ComplexPoly& o) const {
    if (is_zero() || o.is_zero()) return ComplexPoly();
    std::vector<cplx> r(c_.size() + o.c_.size() - 1, cplx(0));
    for (size_t i = 0; i < c_.size(); ++i)
        for (size_t j = 0; j < o.c_.size(); ++j) r[i + j] += c_[i] * o.c_[j];
    return ComplexPoly(std::move(r));
}

ComplexPoly ComplexPoly::operator*(cplx a) const {
    std::vector<cplx> r(c_);
    for (auto& v : r) v *= a;
    return ComplexPoly(std::move(r));
}

std::string ComplexPoly::str() const {
    std::ostringstream os;
    os << "[";
    for (size_t k = 0; k < c_.size(); ++k) {
        if (k) os << ", ";
        os << c_[k].real() << (c_[k].imag() < 0 ? "-" : "+") << std::abs(c_[k].imag()) << "i";
    }
    os << "]";
    return os.str();
}

}  // namespace qsc
