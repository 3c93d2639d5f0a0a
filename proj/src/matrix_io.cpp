#include "rh/matrix_io.hpp"

#include "rh/errors.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace rh {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_matrix(std::ostream& os, const Mat& M) {
  os << M.rows() << ' ' << M.cols() << '\n';
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (j) os << ' ';
      os << format_double(M(i, j));
    }
    os << '\n';
  }
}

namespace {

double parse_double(const std::string& tok) {
  double v = 0.0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    throw ValidationError("matrix dump: cannot parse value '" + tok + "'");
  return v;
}

}  // namespace

Mat read_matrix(std::istream& is) {
  long rows = -1, cols = -1;
  if (!(is >> rows >> cols) || rows < 0 || cols < 0)
    throw ValidationError("matrix dump: bad header (expected \"rows cols\")");
  Mat M(rows, cols);
  std::string tok;
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) {
      if (!(is >> tok)) throw ValidationError("matrix dump: truncated data");
      M(i, j) = parse_double(tok);
    }
  return M;
}

void save_matrix(const std::filesystem::path& path, const Mat& M) {
  std::ostringstream os;
  write_matrix(os, M);
  write_file_atomic(path, os.str());
}

Mat load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return read_matrix(in);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace rh
