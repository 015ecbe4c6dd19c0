#pragma once

// SDPA sparse format exchange.
//
// SDPA reads
//
//   min c.y  s.t.  F(y) = sum_i y_i F_i - F_0 >= 0
//
// so a block constant c_0 is written as F_0 = -c_0. Equalities a.y = b become
// a diagonal LP block holding the pair a.y - b >= 0, -a.y + b >= 0 per row. A
// comment line "*occf-equalities <block>" tells import_sdpa to fold those pairs
// back into equality rows; external solvers ignore it.

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "occf/conic.hpp"
#include "occf/errors.hpp"
#include "occf/format.hpp"

namespace occf {

inline constexpr const char* kSdpaEqualityHint = "*occf-equalities";

inline std::string export_sdpa(const ConicProblem& input) {
  ConicProblem problem = input;
  problem.canonicalize();
  problem.validate();

  const std::size_t m = problem.num_vars;
  const std::size_t nblocks = problem.blocks.size() + (problem.equalities.empty() ? 0 : 1);
  // (matno, block, i, j) -> value, all 1-based.
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t, double>> entries;
  for (std::size_t k = 0; k < problem.blocks.size(); ++k)
    for (const auto& e : problem.blocks[k].entries) {
      const bool constant = e.var == kConstantTerm;
      entries.emplace_back(constant ? 0 : e.var + 1, k + 1, e.i + 1, e.j + 1,
                           constant ? -e.value : e.value);
    }
  if (!problem.equalities.empty()) {
    const std::size_t blk = problem.blocks.size() + 1;
    for (std::size_t r = 0; r < problem.equalities.size(); ++r) {
      const auto& row = problem.equalities[r];
      const std::size_t up = 2 * r + 1, down = 2 * r + 2;
      for (const auto& [var, v] : row.coeffs) {
        entries.emplace_back(var + 1, blk, up, up, v);
        entries.emplace_back(var + 1, blk, down, down, -v);
      }
      if (row.rhs != 0.0) {
        entries.emplace_back(0, blk, up, up, row.rhs);
        entries.emplace_back(0, blk, down, down, -row.rhs);
      }
    }
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return std::tie(std::get<0>(a), std::get<1>(a), std::get<2>(a), std::get<3>(a)) <
           std::tie(std::get<0>(b), std::get<1>(b), std::get<2>(b), std::get<3>(b));
  });

  std::ostringstream out;
  if (!problem.equalities.empty())
    out << kSdpaEqualityHint << ' ' << problem.blocks.size() + 1 << '\n';
  out << m << '\n' << nblocks << '\n';
  for (std::size_t k = 0; k < problem.blocks.size(); ++k)
    out << (k ? " " : "") << problem.blocks[k].side;
  if (!problem.equalities.empty())
    out << (problem.blocks.empty() ? "" : " ") << "-" << 2 * problem.equalities.size();
  out << '\n';
  for (std::size_t i = 0; i < m; ++i) out << (i ? " " : "") << format_double(problem.objective[i]);
  out << '\n';
  for (const auto& [mat, blk, i, j, v] : entries)
    out << mat << ' ' << blk << ' ' << i << ' ' << j << ' ' << format_double(v) << '\n';
  return out.str();
}

namespace detail {

struct SdpaLine {
  std::size_t number = 0;
  std::vector<std::string> tokens;
};

inline std::vector<std::string> sdpa_tokens(std::string text) {
  for (char& ch : text)
    if (ch == ',' || ch == '{' || ch == '}' || ch == '(' || ch == ')' || ch == '\t' || ch == '\r')
      ch = ' ';
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

inline long long sdpa_integer(const std::string& token, std::size_t line) {
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(token.c_str(), &end, 10);
  if (errno != 0 || end == token.c_str() || *end != '\0')
    throw ParseError("expected an integer, found '" + token + "'", line);
  return v;
}

inline std::size_t sdpa_index(const std::string& token, std::size_t lo, std::size_t hi,
                              const char* what, std::size_t line) {
  const long long v = sdpa_integer(token, line);
  if (v < static_cast<long long>(lo) || v > static_cast<long long>(hi))
    throw ParseError(std::string(what) + " " + token + " out of range [" + std::to_string(lo) +
                         ", " + std::to_string(hi) + "]",
                     line);
  return static_cast<std::size_t>(v);
}

}  // namespace detail

/// Parses SDPA sparse text. LP blocks without the equality hint become 1x1 blocks.
inline ConicProblem import_sdpa(const std::string& text) {
  std::vector<detail::SdpaLine> lines;
  std::optional<std::size_t> hint_block;
  std::size_t hint_line = 0;
  {
    std::istringstream in(text);
    std::string raw;
    std::size_t number = 0;
    while (std::getline(in, raw)) {
      ++number;
      const auto first = raw.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      if (raw[first] == '"' || raw[first] == '*') {
        if (raw.compare(first, std::char_traits<char>::length(kSdpaEqualityHint),
                        kSdpaEqualityHint) == 0) {
          auto toks = detail::sdpa_tokens(raw.substr(first));
          if (toks.size() != 2) throw ParseError("equality hint needs one block index", number);
          hint_block = static_cast<std::size_t>(detail::sdpa_integer(toks[1], number));
          hint_line = number;
        }
        continue;
      }
      auto toks = detail::sdpa_tokens(raw);
      if (!toks.empty()) lines.push_back({number, std::move(toks)});
    }
  }
  std::size_t cursor = 0;
  const std::size_t last_line = lines.empty() ? 0 : lines.back().number;
  auto next = [&](const char* what) -> const detail::SdpaLine& {
    if (cursor >= lines.size())
      throw ParseError(std::string("unexpected end of file, expected ") + what, last_line + 1);
    return lines[cursor++];
  };

  const auto& m_line = next("variable count");
  const long long m_raw = detail::sdpa_integer(m_line.tokens.at(0), m_line.number);
  if (m_raw < 0) throw ParseError("negative variable count", m_line.number);
  const auto m = static_cast<std::size_t>(m_raw);

  const auto& nb_line = next("block count");
  const long long nb_raw = detail::sdpa_integer(nb_line.tokens.at(0), nb_line.number);
  if (nb_raw < 0) throw ParseError("negative block count", nb_line.number);
  const auto nblocks = static_cast<std::size_t>(nb_raw);

  std::vector<long long> sizes;
  while (sizes.size() < nblocks) {
    const auto& l = next("block sizes");
    for (const auto& tok : l.tokens) {
      if (sizes.size() == nblocks) break;
      const long long s = detail::sdpa_integer(tok, l.number);
      if (s == 0) throw ParseError("block size must be nonzero", l.number);
      sizes.push_back(s);
    }
  }

  std::vector<double> objective;
  while (objective.size() < m) {
    const auto& l = next("objective vector");
    for (const auto& tok : l.tokens) {
      if (objective.size() == m) break;
      objective.push_back(parse_double(tok, l.number));
    }
  }

  if (hint_block) {
    if (*hint_block < 1 || *hint_block > nblocks)
      throw ParseError("equality hint names a missing block", hint_line);
    const long long s = sizes[*hint_block - 1];
    if (s > 0 || s % 2 != 0)
      throw ParseError("equality block must be diagonal with an even size", hint_line);
  }

  // Per block: (var, i, j) -> value, var = kConstantTerm for F_0 (stored negated).
  std::vector<std::map<std::tuple<std::size_t, std::size_t, std::size_t>, double>> data(nblocks);
  for (; cursor < lines.size(); ++cursor) {
    const auto& l = lines[cursor];
    if (l.tokens.size() != 5)
      throw ParseError("entry needs 'matno blkno i j value'", l.number);
    const std::size_t mat = detail::sdpa_index(l.tokens[0], 0, m, "matrix number", l.number);
    const std::size_t blk =
        detail::sdpa_index(l.tokens[1], 1, std::max<std::size_t>(nblocks, 1), "block index", l.number);
    if (nblocks == 0) throw ParseError("entry without blocks", l.number);
    const long long s = sizes[blk - 1];
    const auto side = static_cast<std::size_t>(s < 0 ? -s : s);
    std::size_t i = detail::sdpa_index(l.tokens[2], 1, side, "row index", l.number);
    std::size_t j = detail::sdpa_index(l.tokens[3], 1, side, "column index", l.number);
    if (s < 0 && i != j) throw ParseError("off-diagonal entry in a diagonal block", l.number);
    if (i > j) std::swap(i, j);
    double v = parse_double(l.tokens[4], l.number);
    const std::size_t var = mat == 0 ? kConstantTerm : mat - 1;
    if (mat == 0) v = -v;
    data[blk - 1][{var, i - 1, j - 1}] += v;
  }

  ConicProblem problem;
  problem.num_vars = m;
  problem.objective = std::move(objective);
  for (std::size_t k = 0; k < nblocks; ++k) {
    const long long s = sizes[k];
    if (hint_block && k + 1 == *hint_block) {
      const std::size_t rows = static_cast<std::size_t>(-s) / 2;
      problem.equalities.assign(rows, {});
      std::vector<SparseCombo> mirror(rows);
      std::vector<double> mirror_rhs(rows, 0.0);
      for (const auto& [key, v] : data[k]) {
        const auto& [var, i, j] = key;
        const std::size_t r = i / 2;
        const bool up = i % 2 == 0;
        if (var == kConstantTerm) {
          // F_0 is b on the upper row and -b on its mirror; v holds -F_0.
          (up ? problem.equalities[r].rhs : mirror_rhs[r]) = up ? -v : v;
        } else {
          (up ? problem.equalities[r].coeffs : mirror[r]).emplace_back(var, up ? v : -v);
        }
      }
      for (std::size_t r = 0; r < rows; ++r)
        if (mirror[r] != problem.equalities[r].coeffs || mirror_rhs[r] != problem.equalities[r].rhs)
          throw ParseError("equality rows " + std::to_string(2 * r + 1) + " and " +
                               std::to_string(2 * r + 2) + " are not a mirrored pair",
                           hint_line);
      continue;
    }
    if (s > 0) {
      ConeBlock block;
      block.side = static_cast<std::size_t>(s);
      block.label = "block" + std::to_string(k + 1);
      for (const auto& [key, v] : data[k])
        block.entries.push_back({std::get<1>(key), std::get<2>(key), std::get<0>(key), v});
      problem.blocks.push_back(std::move(block));
    } else {
      const auto side = static_cast<std::size_t>(-s);
      std::vector<ConeBlock> diag(side);
      for (std::size_t i = 0; i < side; ++i) {
        diag[i].side = 1;
        diag[i].label = "block" + std::to_string(k + 1) + "." + std::to_string(i + 1);
      }
      for (const auto& [key, v] : data[k])
        diag[std::get<1>(key)].entries.push_back({0, 0, std::get<0>(key), v});
      for (auto& b : diag) problem.blocks.push_back(std::move(b));
    }
  }
  problem.canonicalize();
  problem.validate();
  return problem;
}

inline void write_sdpa_file(const ConicProblem& problem, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigurationError("cannot open '" + path + "' for writing");
  out << export_sdpa(problem);
  if (!out) throw ConfigurationError("failed writing '" + path + "'");
}

inline ConicProblem read_sdpa_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigurationError("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return import_sdpa(buffer.str());
}

/// Coefficient-level equality of objective, equalities and blocks; labels ignored.
inline bool same_coefficients(const ConicProblem& a, const ConicProblem& b) {
  if (a.num_vars != b.num_vars || a.objective != b.objective) return false;
  if (a.equalities.size() != b.equalities.size() || a.blocks.size() != b.blocks.size()) return false;
  for (std::size_t r = 0; r < a.equalities.size(); ++r)
    if (a.equalities[r].coeffs != b.equalities[r].coeffs || a.equalities[r].rhs != b.equalities[r].rhs)
      return false;
  for (std::size_t k = 0; k < a.blocks.size(); ++k)
    if (a.blocks[k].side != b.blocks[k].side || a.blocks[k].entries != b.blocks[k].entries)
      return false;
  return true;
}

}  // namespace occf
