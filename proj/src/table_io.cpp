#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "srmq/errors.hpp"
#include "srmq/format.hpp"
#include "srmq/scheduler.hpp"

namespace srmq {

namespace {

constexpr const char* kMagic = "srmq-qtable";
constexpr int kVersion = 1;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path) : path_(path), in_(path) {
    if (!in_) throw ValidationError("table: cannot open " + path.string());
  }

  // Next line split on whitespace; the first token must equal `key`.
  std::vector<std::string> expect(const std::string& key) {
    std::string line;
    if (!std::getline(in_, line)) fail("unexpected end of file, wanted '" + key + "'");
    ++line_no_;
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    for (std::string tok; ss >> tok;) tokens.push_back(tok);
    if (tokens.empty() || tokens[0] != key) fail("expected '" + key + "'");
    return tokens;
  }

  std::vector<std::string> next_tokens() {
    std::string line;
    if (!std::getline(in_, line)) fail("unexpected end of file");
    ++line_no_;
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    for (std::string tok; ss >> tok;) tokens.push_back(tok);
    return tokens;
  }

  double number(const std::string& tok) {
    const auto v = parse_double(tok);
    if (!v) fail("bad number '" + tok + "'");
    return *v;
  }

  std::vector<double> counted_list(const std::string& key) {
    const auto tokens = expect(key);
    if (tokens.size() < 2) fail("missing count for '" + key + "'");
    const double count = number(tokens[1]);
    if (count < 1 || count != std::floor(count) || tokens.size() != std::size_t(count) + 2) {
      fail("count mismatch for '" + key + "'");
    }
    std::vector<double> out;
    for (std::size_t n = 2; n < tokens.size(); ++n) out.push_back(number(tokens[n]));
    return out;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError("table: " + path_.string() + ":" + std::to_string(line_no_) +
                          ": " + what);
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

}  // namespace

std::uint64_t motor_params_hash(const MotorParams& m) {
  const std::string text = "R=" + format_double(m.resistance) +
                           ";T=" + format_double(m.sample_period) +
                           ";Lu=" + format_double(m.l_unaligned) +
                           ";La=" + format_double(m.l_aligned) +
                           ";pitch=" + format_double(m.rotor_pitch) +
                           ";rpm=" + format_double(m.speed_rpm) +
                           ";vdc=" + format_double(m.v_dc) +
                           ";inom=" + format_double(m.i_nominal);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void save_table(const QCoreTable& table, std::uint64_t params_hash,
                const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("table: cannot write " + path.string());
  const auto& grid = table.grid();
  out << kMagic << ' ' << kVersion << '\n';
  out << "params_hash " << hex64(params_hash) << '\n';
  out << "pitch " << format_double(grid.pitch) << '\n';
  out << "gamma " << format_double(table.gamma()) << '\n';
  out << "tau " << format_double(table.tau()) << '\n';
  out << "theta_nodes " << grid.rows();
  for (double t : grid.theta_nodes) out << ' ' << format_double(t);
  out << "\ncurrent_nodes " << grid.cols();
  for (double c : grid.current_nodes) out << ' ' << format_double(c);
  out << "\ncores " << grid.rows() * grid.cols() << '\n';
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    for (std::size_t c = 0; c < grid.cols(); ++c) {
      const HalfVec g = table.core(r, c).half_vec();
      for (int j = 0; j < kHalfVecSize; ++j) {
        out << (j ? " " : "") << format_double(g(j));
      }
      out << '\n';
    }
  }
  out << "end\n";
  if (!out) throw std::runtime_error("table: write failed for " + path.string());
}

LoadedTable load_table(const std::filesystem::path& path) {
  LineReader reader(path);
  const auto magic = reader.expect(kMagic);
  if (magic.size() != 2 || magic[1] != std::to_string(kVersion)) {
    reader.fail("unsupported table version");
  }
  const auto hash_line = reader.expect("params_hash");
  if (hash_line.size() != 2 || hash_line[1].size() != 16) reader.fail("bad params_hash");
  std::uint64_t hash = 0;
  try {
    std::size_t used = 0;
    hash = std::stoull(hash_line[1], &used, 16);
    if (used != 16) reader.fail("bad params_hash");
  } catch (const std::logic_error&) {
    reader.fail("bad params_hash");
  }
  auto scalar = [&](const std::string& key) {
    const auto tokens = reader.expect(key);
    if (tokens.size() != 2) reader.fail("bad '" + key + "' line");
    return reader.number(tokens[1]);
  };
  GridSpec grid;
  grid.pitch = scalar("pitch");
  const double gamma = scalar("gamma");
  const double tau = scalar("tau");
  grid.theta_nodes = reader.counted_list("theta_nodes");
  grid.current_nodes = reader.counted_list("current_nodes");
  const double count = scalar("cores");
  const std::size_t expected = grid.theta_nodes.size() * grid.current_nodes.size();
  if (count != double(expected)) reader.fail("core count does not match grid");

  std::vector<QKernel> cores;
  cores.reserve(expected);
  for (std::size_t n = 0; n < expected; ++n) {
    const auto tokens = reader.next_tokens();
    if (tokens.size() != kHalfVecSize) reader.fail("core line needs 6 numbers");
    HalfVec g;
    for (int j = 0; j < kHalfVecSize; ++j) g(j) = reader.number(tokens[std::size_t(j)]);
    cores.push_back(QKernel::from_half_vec(g));
  }
  reader.expect("end");
  try {
    return {QCoreTable(std::move(grid), std::move(cores), gamma, tau), hash};
  } catch (const EvaluationError& e) {
    throw ValidationError(std::string("table: ") + path.string() + ": " + e.what());
  }
}

}  // namespace srmq
