#include "raydf/nn.hpp"

#include <cstring>
#include <fstream>

namespace raydf::nn {

double lr_at(const LrSchedule& schedule, long step) {
  if (step < 0 || step > schedule.total_steps)
    throw std::out_of_range("lr_at: step outside [0, total_steps]");
  const double T = (double)schedule.total_steps;
  if (schedule.kind == LrSchedule::Kind::Cosine) {
    return schedule.lr_final +
           (schedule.lr_init - schedule.lr_final) *
               (1.0 + std::cos(EIGEN_PI * step / T)) / 2.0;
  }
  // one-cycle triangular: lr_max/div at both ends, lr_max at T/2
  const double low = schedule.lr_max / schedule.cyclic_div;
  const double half = T / 2.0;
  const double frac = step <= half ? step / half : (T - step) / half;
  return low + (schedule.lr_max - low) * frac;
}

namespace {

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw io_error("TruncatedFile");
  return v;
}

constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const MlpF& net,
                     const AdamState<float>* state) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path);
  os.write("RAYW", 4);
  put(os, kVersion);
  put(os, static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& l : net.layers) {
    put(os, static_cast<std::uint32_t>(l.weight.cols()));
    put(os, static_cast<std::uint32_t>(l.weight.rows()));
    put(os, static_cast<std::uint8_t>(l.act));
    put(os, l.omega);
  }
  auto write_mat = [&](const Matrix<float>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) put(os, m(r, c));
  };
  for (const auto& l : net.layers) {
    write_mat(l.weight);
    write_mat(l.bias);
  }
  put(os, static_cast<std::uint8_t>(state ? 1 : 0));
  if (state) {
    put(os, static_cast<std::int64_t>(state->step));
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      write_mat(state->m_w[l]);
      write_mat(state->v_w[l]);
      write_mat(state->m_b[l]);
      write_mat(state->v_b[l]);
    }
  }
}

MlpF load_checkpoint(const std::string& path, AdamState<float>* state) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open for reading: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is) throw io_error("TruncatedFile");
  if (std::memcmp(magic, "RAYW", 4) != 0) throw io_error("BadMagic");
  if (get<std::uint32_t>(is) != kVersion) throw io_error("VersionMismatch");
  MlpF net;
  const auto count = get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    Layer<float> l;
    const auto in = get<std::uint32_t>(is);
    const auto out = get<std::uint32_t>(is);
    l.act = static_cast<Activation>(get<std::uint8_t>(is));
    l.omega = get<float>(is);
    l.weight.resize(out, in);
    l.bias.resize(out);
    net.layers.push_back(std::move(l));
  }
  auto read_mat = [&](Matrix<float>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get<float>(is);
  };
  for (auto& l : net.layers) {
    read_mat(l.weight);
    Matrix<float> b(l.bias.size(), 1);
    read_mat(b);
    l.bias = b;
  }
  const auto has_state = get<std::uint8_t>(is);
  if (has_state && state) {
    *state = AdamState<float>::zeros_like(net);
    state->step = static_cast<long>(get<std::int64_t>(is));
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      read_mat(state->m_w[l]);
      read_mat(state->v_w[l]);
      Matrix<float> mb(state->m_b[l].size(), 1), vb(state->v_b[l].size(), 1);
      read_mat(mb);
      read_mat(vb);
      state->m_b[l] = mb;
      state->v_b[l] = vb;
    }
  }
  return net;
}

}  // namespace raydf::nn
