#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rdpkit/rdp.hpp"

namespace rdpkit {

/// 2×m enemy grid. Enemy j sits in row 0 with probability p0[j] while the
/// swap bit is 0, and with probability p1[j] once it has flipped.
struct GridSpec {
  std::size_t m = 1;
  std::vector<double> p0;
  std::vector<double> p1;
  double gamma = 0.9;
};

/// States ⟨i, b⟩ (index 2i + b), initial ⟨m−1, 0⟩. Observations are
/// `k_j_enemy` / `k_j_clear` for row k and column j.
Rdp make_grid_rdp(const GridSpec& spec);

/// Deterministic chain: observations s1..sn, reward 1 only for `good_action`
/// once the agent has reached s_n. State q_j remembers the last observation
/// s_j; q0 is the initial state and behaves like q1.
///
/// With `with_ended`, every transit step instead emits the observation
/// `ended` with probability 1/2 and moves to an absorbing zero-reward sink.
Rdp make_chain_rdp(std::size_t n, std::size_t good_action, double gamma = 0.9,
                   bool with_ended = false, std::size_t num_actions = 2);

/// Noisy parity over the bits selected by `subset` (bit i−1 selects x_i).
/// m uniform bits are observed, then the decision step pays 1 iff the action
/// matches the label, which is the parity flipped with probability `noise`.
Rdp make_parity_rdp(std::size_t m, std::uint64_t subset, double noise, double gamma = 0.9);

/// One-state bandit: action a_i yields s+ with reward 1 with probability p_i,
/// otherwise s− with reward 0.
Rdp make_mab_rdp(const std::vector<double>& arm_probs, double gamma = 0.0);

void write_rdp(std::ostream& out, const Rdp& rdp);
std::string serialize_rdp(const Rdp& rdp);
Rdp parse_rdp(std::istream& in);
Rdp parse_rdp(const std::string& text);

void save_rdp(const std::filesystem::path& path, const Rdp& rdp);
Rdp load_rdp(const std::filesystem::path& path);

}  // namespace rdpkit
