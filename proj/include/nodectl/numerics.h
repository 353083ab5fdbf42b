#pragma once

// Dense linear algebra used by every other module. Matrices here are small
// (LMI blocks stay well under 50x50), so the routines favour robustness.

#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace nodectl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Thrown on inconsistent matrix shapes or a violated symmetry precondition.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Relative asymmetry accepted by the symmetric routines.
inline constexpr double kSymmetryTolerance = 1e-12;

struct SymEigReport {
  double lambda_min{};
  double lambda_max{};
  /// Magnitude below which an extreme eigenvalue is reported as 0.
  double tolerance_used{};
};

/// Extreme eigenvalues of a symmetric matrix. The input is symmetrized as
/// (M + M^T)/2 after the symmetry check; values within 4 n eps max|lambda|
/// of zero are returned as exactly zero.
SymEigReport SymEigBounds(const Mat& m);

/// True iff lambda_max(M) <= tol.
bool IsNsd(const Mat& m, double tol);

/// Lower-triangular L with L L^T = M, or nullopt when M is not positive
/// definite. Indefiniteness is an ordinary outcome, not an error.
std::optional<Mat> CholeskyPd(const Mat& m);

/// Moore-Penrose pseudoinverse via SVD with relative cutoff 1e-12 * sigma_max.
Mat Pinv(const Mat& m);

/// Placeholder for an all-zero block whose shape is inferred from the grid.
struct ZeroBlock {};
/// Placeholder for the transpose of the mirrored block (j, i).
struct StarBlock {};

using Block = std::variant<Mat, ZeroBlock, StarBlock>;
using BlockGrid = std::vector<std::vector<Block>>;

/// Places the blocks of `layout` into one dense matrix. Row heights and
/// column widths are taken from the explicit blocks (a star contributes the
/// transposed shape of its mirror). Throws DimensionError naming the first
/// inconsistent block.
Mat AssembleBlocks(const BlockGrid& layout);

/// Block-diagonal concatenation.
Mat BlockDiag(const std::vector<Mat>& blocks);

/// Throws DimensionError unless m is square and symmetric to
/// kSymmetryTolerance (relative to its largest entry).
void RequireSymmetric(const Mat& m, const char* what);

inline Mat Symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

bool AllFinite(const Mat& m);

}  // namespace nodectl
