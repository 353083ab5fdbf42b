#include "nodectl/numerics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace nodectl {

bool AllFinite(const Mat& m) { return m.allFinite(); }

void RequireSymmetric(const Mat& m, const char* what) {
  if (m.rows() != m.cols()) {
    std::ostringstream os;
    os << what << ": expected a square matrix, got " << m.rows() << "x"
       << m.cols();
    throw DimensionError(os.str());
  }
  if (m.size() == 0) return;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTolerance * scale) {
    std::ostringstream os;
    os << what << ": matrix is not symmetric (max asymmetry " << asym << ")";
    throw DimensionError(os.str());
  }
}

SymEigReport SymEigBounds(const Mat& m) {
  RequireSymmetric(m, "SymEigBounds");
  if (m.size() == 0) throw DimensionError("SymEigBounds: empty matrix");
  Eigen::SelfAdjointEigenSolver<Mat> solver(Symmetrize(m),
                                            Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("SymEigBounds: eigenvalue iteration failed");
  }
  const Vec& ev = solver.eigenvalues();  // ascending
  // Eigenvalues within the solver's backward error of zero are reported as
  // zero, so exactly singular semidefinite inputs keep their sign.
  const double scale = std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
  const double floor = 4.0 * static_cast<double>(m.rows()) *
                       std::numeric_limits<double>::epsilon() * scale;
  const auto snap = [floor](double v) { return std::abs(v) <= floor ? 0.0 : v; };
  return {snap(ev(0)), snap(ev(ev.size() - 1)), floor};
}

bool IsNsd(const Mat& m, double tol) { return SymEigBounds(m).lambda_max <= tol; }

std::optional<Mat> CholeskyPd(const Mat& m) {
  RequireSymmetric(m, "CholeskyPd");
  Eigen::LLT<Mat> llt(Symmetrize(m));
  if (llt.info() != Eigen::Success) return std::nullopt;
  Mat l = llt.matrixL();
  if (!l.allFinite() || (l.diagonal().array() <= 0.0).any()) {
    return std::nullopt;
  }
  return l;
}

Mat Pinv(const Mat& m) {
  if (m.size() == 0) return Mat::Zero(m.cols(), m.rows());
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& sigma = svd.singularValues();
  const double cutoff = 1e-12 * (sigma.size() > 0 ? sigma(0) : 0.0);
  Vec inv = Vec::Zero(sigma.size());
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma(i) > cutoff && sigma(i) > 0.0) inv(i) = 1.0 / sigma(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

namespace {

std::string BlockName(size_t i, size_t j) {
  std::ostringstream os;
  os << "block (" << i << ", " << j << ")";
  return os.str();
}

// Shape contributed by block (i, j): rows, cols; -1 when not determined.
std::pair<Eigen::Index, Eigen::Index> BlockShape(const BlockGrid& grid,
                                                 size_t i, size_t j) {
  const Block& b = grid[i][j];
  if (const Mat* m = std::get_if<Mat>(&b)) return {m->rows(), m->cols()};
  if (std::holds_alternative<StarBlock>(b)) {
    if (j >= grid.size() || i >= grid[j].size()) {
      throw DimensionError("AssembleBlocks: " + BlockName(i, j) +
                           " mirrors a block outside the grid");
    }
    if (const Mat* m = std::get_if<Mat>(&grid[j][i])) {
      return {m->cols(), m->rows()};
    }
    if (std::holds_alternative<ZeroBlock>(grid[j][i])) return {-1, -1};
    throw DimensionError("AssembleBlocks: " + BlockName(i, j) +
                         " mirrors a block that is not an explicit matrix");
  }
  return {-1, -1};
}

}  // namespace

Mat AssembleBlocks(const BlockGrid& layout) {
  const size_t nr = layout.size();
  if (nr == 0) return Mat(0, 0);
  const size_t nc = layout[0].size();
  for (size_t i = 0; i < nr; ++i) {
    if (layout[i].size() != nc) {
      throw DimensionError("AssembleBlocks: row " + std::to_string(i) +
                           " has a different number of blocks");
    }
  }
  std::vector<Eigen::Index> heights(nr, -1), widths(nc, -1);
  for (size_t i = 0; i < nr; ++i) {
    for (size_t j = 0; j < nc; ++j) {
      const auto [r, c] = BlockShape(layout, i, j);
      if (r < 0) continue;
      if (heights[i] >= 0 && heights[i] != r) {
        throw DimensionError("AssembleBlocks: " + BlockName(i, j) + " has " +
                             std::to_string(r) + " rows, expected " +
                             std::to_string(heights[i]));
      }
      if (widths[j] >= 0 && widths[j] != c) {
        throw DimensionError("AssembleBlocks: " + BlockName(i, j) + " has " +
                             std::to_string(c) + " columns, expected " +
                             std::to_string(widths[j]));
      }
      heights[i] = r;
      widths[j] = c;
    }
  }
  for (size_t i = 0; i < nr; ++i) {
    if (heights[i] < 0) {
      throw DimensionError("AssembleBlocks: height of block row " +
                           std::to_string(i) + " is undetermined");
    }
  }
  for (size_t j = 0; j < nc; ++j) {
    if (widths[j] < 0) {
      throw DimensionError("AssembleBlocks: width of block column " +
                           std::to_string(j) + " is undetermined");
    }
  }
  Eigen::Index total_r = 0, total_c = 0;
  for (auto h : heights) total_r += h;
  for (auto w : widths) total_c += w;
  Mat out = Mat::Zero(total_r, total_c);
  Eigen::Index r0 = 0;
  for (size_t i = 0; i < nr; ++i) {
    Eigen::Index c0 = 0;
    for (size_t j = 0; j < nc; ++j) {
      const Block& b = layout[i][j];
      if (const Mat* m = std::get_if<Mat>(&b)) {
        out.block(r0, c0, heights[i], widths[j]) = *m;
      } else if (std::holds_alternative<StarBlock>(b)) {
        if (const Mat* mirror = std::get_if<Mat>(&layout[j][i])) {
          out.block(r0, c0, heights[i], widths[j]) = mirror->transpose();
        }
      }
      c0 += widths[j];
    }
    r0 += heights[i];
  }
  return out;
}

Mat BlockDiag(const std::vector<Mat>& blocks) {
  Eigen::Index rows = 0, cols = 0;
  for (const Mat& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  Mat out = Mat::Zero(rows, cols);
  Eigen::Index r = 0, c = 0;
  for (const Mat& b : blocks) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

}  // namespace nodectl
