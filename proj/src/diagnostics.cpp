#include "sblpn/diagnostics.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <random>

namespace sblpn {

double mpsrf(const std::vector<Eigen::MatrixXd>& chains) {
  const std::size_t m = chains.size();
  if (m < 2) throw std::invalid_argument("mpsrf: need at least 2 chains");
  const Eigen::Index n = chains.front().rows(), d = chains.front().cols();
  for (const auto& c : chains)
    if (c.rows() != n || c.cols() != d) throw std::invalid_argument("mpsrf: chains differ in shape");
  if (n < d + 2) throw std::invalid_argument("mpsrf: need at least dim + 2 samples per chain");

  Eigen::MatrixXd means(static_cast<Eigen::Index>(m), d);
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t j = 0; j < m; ++j) {
    const Eigen::RowVectorXd mu = chains[j].colwise().mean();
    means.row(static_cast<Eigen::Index>(j)) = mu;
    const Eigen::MatrixXd c = chains[j].rowwise() - mu;
    W.noalias() += c.transpose() * c;
  }
  W /= static_cast<double>(m) * static_cast<double>(n - 1);
  const Eigen::MatrixXd cm = means.rowwise() - means.colwise().mean();
  const Eigen::MatrixXd B_n = cm.transpose() * cm / static_cast<double>(m - 1);

  Eigen::LDLT<Eigen::MatrixXd> ldlt(W);
  const double scale = W.diagonal().cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !(scale > 0.0) ||
      ldlt.vectorD().minCoeff() <= 1e-13 * scale)
    throw RankDeficientError("mpsrf: within-chain covariance is singular");

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(B_n, W, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw RankDeficientError("mpsrf: eigensolver failed");
  const double lambda = es.eigenvalues().maxCoeff();
  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  return (nn - 1.0) / nn + (mm + 1.0) / mm * lambda;
}

double mpsrf(const ChainSet& cs) {
  std::vector<Eigen::MatrixXd> c;
  c.reserve(cs.chains.size());
  for (const auto& r : cs.chains) c.push_back(r.samples);
  return mpsrf(c);
}

EssEstimate ess_1d(const Eigen::Ref<const Eigen::VectorXd>& series) {
  const Eigen::Index N = series.size();
  if (N < 10) throw std::invalid_argument("ess: need at least 10 samples");
  const double mean = series.mean();
  const Eigen::VectorXd c = series.array() - mean;
  const double gamma0 = c.squaredNorm() / static_cast<double>(N);
  if (!(gamma0 > 1e-300 * std::max(1.0, mean * mean)) || c.cwiseAbs().maxCoeff() == 0.0)
    return {static_cast<double>(N), true};

  // Autocovariance via zero-padded FFT.
  Eigen::Index L = 1;
  while (L < 2 * N) L <<= 1;
  std::vector<double> buf(static_cast<std::size_t>(L), 0.0);
  std::copy(c.data(), c.data() + N, buf.begin());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, buf);
  for (auto& z : spec) z = std::norm(z);
  std::vector<double> acov;
  fft.inv(acov, spec);
  const double r0 = acov[0];
  auto rho = [&](Eigen::Index k) { return acov[static_cast<std::size_t>(k)] / r0; };

  // Geyer: sum positive pair sums, forced monotone.
  double tau = -1.0;
  double prev = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; 2 * k + 1 < N; ++k) {
    double pair = rho(2 * k) + rho(2 * k + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev);
    prev = pair;
    tau += 2.0 * pair;
  }
  return {static_cast<double>(N) / tau, false};
}

std::vector<EssEstimate> ess_per_coordinate(const Eigen::MatrixXd& samples) {
  const Eigen::Index d = samples.cols();
  if (samples.rows() < 10) throw std::invalid_argument("ess: need at least 10 samples");
  std::vector<EssEstimate> out(static_cast<std::size_t>(d));
#pragma omp parallel for schedule(dynamic, 4)
  for (Eigen::Index j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] = ess_1d(samples.col(j));
  return out;
}

std::vector<EssEstimate> ess_per_coordinate_serial(const Eigen::MatrixXd& samples) {
  std::vector<EssEstimate> out;
  out.reserve(static_cast<std::size_t>(samples.cols()));
  for (Eigen::Index j = 0; j < samples.cols(); ++j) out.push_back(ess_1d(samples.col(j)));
  return out;
}

double ess(const Eigen::MatrixXd& samples, EssAggregate agg) {
  const auto per = ess_per_coordinate(samples);
  if (per.empty()) throw std::invalid_argument("ess: no coordinates");
  if (agg == EssAggregate::min) {
    return std::min_element(per.begin(), per.end(), [](auto& a, auto& b) { return a.ess < b.ess; })
        ->ess;
  }
  double s = 0.0;
  for (const auto& e : per) s += e.ess;
  return s / static_cast<double>(per.size());
}

std::vector<EssEstimate> ess_chainset(const ChainSet& cs) {
  std::vector<EssEstimate> total(static_cast<std::size_t>(cs.dim));
  for (auto& t : total) t.degenerate = true;
  for (const auto& c : cs.chains) {
    const auto per = ess_per_coordinate(c.samples);
    for (std::size_t j = 0; j < per.size(); ++j) {
      total[j].ess += per[j].ess;
      total[j].degenerate = total[j].degenerate && per[j].degenerate;
    }
  }
  return total;
}

QuantileBand quantile_band(const Eigen::MatrixXd& samples, double lo, double hi) {
  if (!(lo >= 0.0 && lo < hi && hi <= 1.0))
    throw std::invalid_argument("quantile_band: need 0 <= lo < hi <= 1");
  const Eigen::Index N = samples.rows(), d = samples.cols();
  if (N < 1) throw std::invalid_argument("quantile_band: no samples");
  QuantileBand b{samples.colwise().mean().transpose(), Eigen::VectorXd(d), Eigen::VectorXd(d)};
  std::vector<double> col(static_cast<std::size_t>(N));
  auto q = [&](double p) {
    const double h = (static_cast<double>(N) - 1.0) * p;
    const auto i = static_cast<std::size_t>(std::floor(h));
    const double frac = h - static_cast<double>(i);
    if (i + 1 >= col.size()) return col.back();
    return col[i] + frac * (col[i + 1] - col[i]);
  };
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < N; ++i) col[static_cast<std::size_t>(i)] = samples(i, j);
    std::sort(col.begin(), col.end());
    b.lower[j] = q(lo);
    b.upper[j] = q(hi);
  }
  return b;
}

Eigen::MatrixXd pooled_samples(const ChainSet& cs) {
  Eigen::MatrixXd all(cs.retained * static_cast<Eigen::Index>(cs.chains.size()), cs.dim);
  for (std::size_t j = 0; j < cs.chains.size(); ++j)
    all.middleRows(static_cast<Eigen::Index>(j) * cs.retained, cs.retained) = cs.chains[j].samples;
  return all;
}

RunSummary summarize(const ChainSet& cs, double time_s) {
  cs.validate();
  if (cs.chains.empty()) throw std::invalid_argument("summarize: no completed chains");
  RunSummary s;
  s.time_s = time_s;
  for (const auto& c : cs.chains) {
    s.accept_rates.push_back(c.accept_rate);
    s.post_freeze_accept.push_back(c.post_freeze_accept);
  }

  if (cs.chains.size() < 2) {
    s.warnings.push_back("mpsrf omitted: needs at least 2 chains");
  } else {
    std::vector<Eigen::MatrixXd> chains;
    for (const auto& c : cs.chains) chains.push_back(c.samples);
    if (cs.retained < cs.dim + 2) {
      const Eigen::Index k = std::min<Eigen::Index>(cs.dim, cs.retained / 2);
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(cs.dim));
      std::iota(idx.begin(), idx.end(), Eigen::Index{0});
      std::mt19937_64 gen(0x6d707372u);
      std::shuffle(idx.begin(), idx.end(), gen);
      idx.resize(static_cast<std::size_t>(k));
      std::sort(idx.begin(), idx.end());
      s.mpsrf_coordinates = idx;
      for (auto& c : chains) c = Eigen::MatrixXd(c(Eigen::all, idx));
    }
    try {
      s.mpsrf = mpsrf(chains);
      s.mpsrf_minus1_times_time = (*s.mpsrf - 1.0) * time_s;
    } catch (const std::exception& e) {
      s.warnings.push_back(std::string("mpsrf omitted: ") + e.what());
    }
  }

  if (cs.retained >= 10) {
    const auto per = ess_chainset(cs);
    s.ess_min = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < per.size(); ++j) {
      if (per[j].degenerate) ++s.degenerate_coordinates;
      if (per[j].ess < s.ess_min) {
        s.ess_min = per[j].ess;
        s.ess_min_coordinate = static_cast<Eigen::Index>(j);
      }
    }
    s.ess_per_second = time_s > 0.0 ? s.ess_min / time_s : 0.0;
  } else {
    s.warnings.push_back("ess omitted: needs at least 10 retained samples");
  }
  return s;
}

}  // namespace sblpn
