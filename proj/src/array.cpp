#include "cfql/array.hpp"

#include <cmath>

namespace cfql {

bool all_finite(const DenseArray& a) {
    for (double v : a.data)
        if (!std::isfinite(v)) return false;
    return true;
}

double max_abs_diff(const DenseArray& a, const DenseArray& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace cfql
