#include "raydf/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "raydf/geometry.hpp"
#include "raydf/rng.hpp"

namespace raydf::training {

Classifier init_classifier(int hidden, int trunk_layers, std::uint64_t seed) {
  Classifier clf;
  clf.ray_encoder = nn::init_siren<float>({4, hidden}, 30.0f,
                                          mix_seed(seed, 1), nn::Activation::Sine);
  // single-layer nets: make the only layer a sine encoder layer
  clf.ray_encoder.layers[0].act = nn::Activation::Sine;
  clf.ray_encoder.layers[0].omega = 30.0f;
  clf.point_encoder = nn::init_siren<float>({3, hidden}, 30.0f,
                                            mix_seed(seed, 2), nn::Activation::Sine);
  clf.point_encoder.layers[0].act = nn::Activation::Sine;
  clf.point_encoder.layers[0].omega = 30.0f;
  std::vector<int> trunk_sizes;
  trunk_sizes.push_back(2 * hidden);
  for (int i = 0; i < trunk_layers - 1; ++i) trunk_sizes.push_back(hidden);
  trunk_sizes.push_back(1);
  clf.trunk = nn::init_siren<float>(trunk_sizes, 30.0f, mix_seed(seed, 3),
                                    nn::Activation::Sigmoid);
  return clf;
}

MatrixF classifier_forward(const Classifier& clf, const MatrixF& rays1,
                           const MatrixF& rays2, const MatrixF& points1) {
  if (rays1.rows() != 4 || rays2.rows() != 4 || points1.rows() != 3 ||
      rays1.cols() != rays2.cols() || rays1.cols() != points1.cols())
    throw shape_error("classifier_forward: bad input shapes");
  const MatrixF g1 = nn::forward(clf.ray_encoder, rays1);
  const MatrixF g2 = nn::forward(clf.ray_encoder, rays2);
  const MatrixF kp = nn::forward(clf.point_encoder, points1);
  MatrixF feat(g1.rows() + kp.rows(), g1.cols());
  feat.topRows(g1.rows()) = 0.5f * (g1 + g2);  // commutative: order-invariant
  feat.bottomRows(kp.rows()) = kp;
  return nn::forward(clf.trunk, feat);
}

void save_classifier(const std::string& path, const Classifier& clf) {
  nn::MlpF flat;
  flat.layers.push_back(clf.ray_encoder.layers[0]);
  flat.layers.push_back(clf.point_encoder.layers[0]);
  for (const auto& l : clf.trunk.layers) flat.layers.push_back(l);
  nn::save_checkpoint(path, flat);
}

Classifier load_classifier(const std::string& path) {
  nn::MlpF flat = nn::load_checkpoint(path);
  if (flat.layers.size() < 3 || flat.layers[0].weight.cols() != 4 ||
      flat.layers[1].weight.cols() != 3)
    throw io_error("not a classifier checkpoint: " + path);
  Classifier clf;
  clf.ray_encoder.layers.push_back(flat.layers[0]);
  clf.point_encoder.layers.push_back(flat.layers[1]);
  clf.trunk.layers.assign(flat.layers.begin() + 2, flat.layers.end());
  return clf;
}

namespace {

struct Confusion {
  long tp = 0, tn = 0, fp = 0, fn = 0;

  void add(bool pred, bool truth) {
    if (pred && truth) ++tp;
    else if (pred && !truth) ++fp;
    else if (!pred && truth) ++fn;
    else ++tn;
  }
  double accuracy_pct() const {
    const long n = tp + tn + fp + fn;
    return n ? 100.0 * (tp + tn) / n : 0.0;
  }
  double f1_pct() const {
    const double denom = 2.0 * tp + fp + fn;
    return denom > 0.0 ? 100.0 * 2.0 * tp / denom : 0.0;
  }
};

void fill_pair_batch(const std::vector<dataset::VisibilityPair>& pairs,
                     const std::vector<std::size_t>& idx, std::size_t begin,
                     std::size_t end, MatrixF& r1, MatrixF& r2, MatrixF& pt,
                     MatrixF& labels) {
  const auto n = static_cast<Eigen::Index>(end - begin);
  r1.resize(4, n);
  r2.resize(4, n);
  pt.resize(3, n);
  labels.resize(1, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = pairs[idx[begin + i]];
    r1.col(i) = p.ray1;
    r2.col(i) = p.ray2;
    pt.col(i) = p.point1;
    labels(0, i) = static_cast<float>(p.label);
  }
}

}  // namespace

ClassifierTrainResult train_classifier(
    const std::vector<dataset::VisibilityPair>& pairs,
    const ClassifierConfig& config) {
  if (pairs.empty()) throw std::runtime_error("SingleClassData: no pairs");
  std::size_t positives = 0;
  for (const auto& p : pairs) positives += p.label;
  if (positives == 0 || positives == pairs.size())
    throw std::runtime_error("SingleClassData: one label class is absent");

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 split_rng(mix_seed(config.seed, 0x51137));
  std::shuffle(order.begin(), order.end(), split_rng);
  const std::size_t n_held = std::max<std::size_t>(1, order.size() / 10);
  const std::size_t n_train = order.size() - n_held;

  ClassifierTrainResult result;
  result.classifier =
      init_classifier(config.hidden, config.trunk_layers, config.seed);
  Classifier& clf = result.classifier;
  auto adam_g = nn::AdamState<float>::zeros_like(clf.ray_encoder);
  auto adam_k = nn::AdamState<float>::zeros_like(clf.point_encoder);
  auto adam_t = nn::AdamState<float>::zeros_like(clf.trunk);

  const long steps_per_epoch =
      (long)((n_train + config.batch_size - 1) / config.batch_size);
  const auto schedule = nn::LrSchedule::cyclic(
      config.lr_max, std::max(1L, config.epochs * steps_per_epoch));

  const int hidden = (int)clf.ray_encoder.layers[0].weight.rows();
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(config.seed, 0xE000 + epoch));
    std::shuffle(order.begin(), order.begin() + n_train, rng);
    double epoch_loss = 0.0;
    long epoch_batches = 0;
    for (std::size_t b = 0; b < n_train; b += config.batch_size) {
      const std::size_t e = std::min(b + config.batch_size, n_train);
      MatrixF r1, r2, pt, labels;
      fill_pair_batch(pairs, order, b, e, r1, r2, pt, labels);

      const auto g1 = nn::forward_cached(clf.ray_encoder, r1);
      const auto g2 = nn::forward_cached(clf.ray_encoder, r2);
      const auto kc = nn::forward_cached(clf.point_encoder, pt);
      MatrixF feat(2 * hidden, r1.cols());
      feat.topRows(hidden) = 0.5f * (g1.post.back() + g2.post.back());
      feat.bottomRows(hidden) = kc.post.back();
      const auto tc = nn::forward_cached(clf.trunk, feat);

      auto loss = nn::bce_loss<float>(tc.post.back(), labels);
      if (config.positive_weight != 1.0) {
        // reweight positive-class terms of loss and gradient
        const float w = (float)config.positive_weight;
        const auto& pred = tc.post.back();
        MatrixF p = pred.array().max(1e-7f).min(1.0f - 1e-7f);
        const double n = (double)pred.size();
        loss.value = 0.0;
        for (Eigen::Index i = 0; i < pred.cols(); ++i) {
          const double pi = p(0, i), ti = labels(0, i);
          loss.value -= (w * ti * std::log(pi) +
                         (1.0 - ti) * std::log(1.0 - pi)) / n;
          loss.grad(0, i) = (float)((-w * ti / pi + (1.0 - ti) / (1.0 - pi)) / n);
        }
      }
      epoch_loss += loss.value;
      ++epoch_batches;

      auto gt = nn::backward(clf.trunk, tc, loss.grad);
      const MatrixF d_avg = gt.input.topRows(hidden);
      const MatrixF d_kp = gt.input.bottomRows(hidden);
      auto ge1 = nn::backward<float>(clf.ray_encoder, g1, 0.5f * d_avg);
      auto ge2 = nn::backward<float>(clf.ray_encoder, g2, 0.5f * d_avg);
      ge1.weight[0] += ge2.weight[0];
      ge1.bias[0] += ge2.bias[0];
      auto gk = nn::backward(clf.point_encoder, kc, d_kp);

      const float lr = (float)nn::lr_at(schedule, step++);
      nn::adam_step(clf.ray_encoder, ge1, adam_g, lr);
      nn::adam_step(clf.point_encoder, gk, adam_k, lr);
      nn::adam_step(clf.trunk, gt, adam_t, lr);
    }
    result.metrics.loss_curve.push_back(epoch_loss /
                                        std::max(1L, epoch_batches));
    if (!config.checkpoint_dir.empty())
      save_classifier(config.checkpoint_dir + "/classifier_epoch_" +
                          std::to_string(epoch + 1) + ".ckpt",
                      clf);
  }

  // held-out metrics
  Confusion cm;
  for (std::size_t b = n_train; b < order.size(); b += 8192) {
    const std::size_t e = std::min(b + (std::size_t)8192, order.size());
    MatrixF r1, r2, pt, labels;
    fill_pair_batch(pairs, order, b, e, r1, r2, pt, labels);
    const MatrixF scores = classifier_forward(clf, r1, r2, pt);
    for (Eigen::Index i = 0; i < scores.cols(); ++i)
      cm.add(scores(0, i) >= 0.5f, labels(0, i) >= 0.5f);
  }
  result.metrics.accuracy = cm.accuracy_pct();
  result.metrics.f1 = cm.f1_pct();
  result.metrics.positive_fraction = (double)positives / pairs.size();
  return result;
}

// ---------------------------------------------------------------------------

VisibilityScorer make_classifier_scorer(const Classifier& clf) {
  return [&clf](const MatrixF& r1, const MatrixF& r2, const MatrixF& p) {
    return classifier_forward(clf, r1, r2, p);
  };
}

std::vector<MultiViewSample> build_multiview_batch(
    const dataset::SampleStore& store, const std::vector<std::size_t>& indices,
    const VisibilityScorer& scorer, int M, double noise_var,
    std::uint64_t rng_seed) {
  std::vector<MultiViewSample> batch(indices.size());
  const double D = store.sphere.diameter;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& rec = store.records[indices[i]];
    MultiViewSample& s = batch[i];
    s.primary = rec.ray;
    s.target = rec.distance;
    s.point = rec.point;
    if (M == 0) continue;
    const Vec3 p = dataset::denormalize_point(rec.point, store.sphere);
    const auto rays = geometry::sample_multiview_rays(
        p, M, store.sphere, mix_seed(rng_seed, indices[i]));
    if (!rays) throw std::runtime_error("PointOutsideSphere in multiview sampling");
    s.rays.reserve(M);
    s.distances.reserve(M);
    for (const auto& mv : *rays) {
      s.rays.push_back(dataset::normalize_ray(mv.ray));
      s.distances.push_back(static_cast<float>(mv.distance / D));
    }
  }
  if (M == 0) return batch;

  // score all pairs in one forward pass
  const Eigen::Index n = (Eigen::Index)indices.size() * M;
  MatrixF r1(4, n), r2(4, n), pt(3, n);
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (int m = 0; m < M; ++m) {
      const Eigen::Index c = (Eigen::Index)i * M + m;
      r1.col(c) = batch[i].primary;
      r2.col(c) = batch[i].rays[m];
      pt.col(c) = batch[i].point;
    }
  const MatrixF scores = scorer(r1, r2, pt);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    batch[i].scores.resize(M);
    std::mt19937_64 noise_rng(mix_seed(rng_seed, 0xA015E ^ indices[i]));
    std::normal_distribution<double> gauss(0.0, std::sqrt(noise_var));
    for (int m = 0; m < M; ++m) {
      double v = scores(0, (Eigen::Index)i * M + m);
      if (noise_var > 0.0) v += gauss(noise_rng);
      batch[i].scores[m] = (float)std::clamp(v, 0.0, 1.0);
    }
  }
  return batch;
}

MultiViewLoss multiview_loss(const MultiViewSample& sample,
                             const Eigen::VectorXf& predictions,
                             LossNorm norm) {
  const int M = (int)sample.rays.size();
  if (predictions.size() != M + 1)
    throw shape_error("multiview_loss: prediction count must be M + 1");
  double vsum = 1.0;
  for (float v : sample.scores) vsum += v;

  MultiViewLoss out;
  out.grad = Eigen::VectorXf::Zero(M + 1);
  auto term = [&](double err, double weight, int slot) {
    if (norm == LossNorm::L1) {
      out.value += weight * std::abs(err);
      out.grad[slot] = (float)(weight * (err > 0 ? 1.0 : (err < 0 ? -1.0 : 0.0)) / vsum);
    } else {
      out.value += weight * err * err;
      out.grad[slot] = (float)(weight * 2.0 * err / vsum);
    }
  };
  term((double)predictions[0] - sample.target, 1.0, 0);
  for (int m = 0; m < M; ++m)
    term((double)predictions[m + 1] - sample.distances[m], sample.scores[m],
         m + 1);
  out.value /= vsum;
  return out;
}

namespace {

// Backpropagates a gradient injected at hidden layer `top` (inclusive) down
// to the parameters of layers [0, top]; used by the radiance branch.
void backward_from_hidden(const nn::MlpF& net,
                          const nn::ForwardCache<float>& cache, int top,
                          const MatrixF& upstream_at_post,
                          nn::Gradients<float>& accum) {
  MatrixF delta = upstream_at_post;
  for (int l = top; l >= 0; --l) {
    delta = delta.cwiseProduct(
        nn::detail::activation_grad(net.layers[l], cache.pre[l]));
    const MatrixF& below = l == 0 ? cache.input : cache.post[l - 1];
    accum.weight[l].noalias() += delta * below.transpose();
    accum.bias[l] += delta.rowwise().sum();
    if (l > 0) delta = (net.layers[l].weight.transpose() * delta).eval();
  }
}

}  // namespace

DistanceTrainResult train_distance(
    const dataset::SampleStore& store, const VisibilityScorer* scorer,
    const DistanceConfig& config,
    const std::vector<Eigen::Vector3f>* colors) {
  if (store.records.empty()) throw std::runtime_error("EmptyStore");
  if (config.M > 0 && (scorer == nullptr || !*scorer))
    throw std::runtime_error("MissingClassifier: M > 0 requires a scorer");
  if (config.radiance &&
      (colors == nullptr || colors->size() != store.records.size()))
    throw std::runtime_error("radiance branch requires record-aligned colors");

  std::vector<int> sizes;
  sizes.push_back(4);
  for (int h : config.hidden) sizes.push_back(h);
  sizes.push_back(1);

  DistanceTrainResult result;
  result.model.net = nn::init_siren<float>(sizes, config.omega0,
                                           mix_seed(config.seed, 0xD157),
                                           nn::Activation::Linear);
  nn::MlpF& net = result.model.net;
  auto adam = nn::AdamState<float>::zeros_like(net);

  nn::AdamState<float> adam_rad;
  if (config.radiance) {
    const int h = config.hidden.back();
    result.model.radiance = nn::init_siren<float>(
        {h, h, 3}, config.omega0, mix_seed(config.seed, 0xC0108),
        nn::Activation::Sigmoid);
    adam_rad = nn::AdamState<float>::zeros_like(*result.model.radiance);
  }

  const std::size_t N = store.records.size();
  const long steps_per_epoch =
      (long)((N + config.batch_size - 1) / config.batch_size);
  const auto schedule = nn::LrSchedule::cosine(
      config.lr_init, config.lr_final,
      std::max(1L, config.epochs * steps_per_epoch));
  const double D = store.sphere.diameter;
  const int M = config.M;
  const int rows_per_sample = M + 1;

  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);

  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(config.seed, 0x5E00 + epoch));
    std::shuffle(order.begin(), order.end(), rng);
    const std::uint64_t epoch_seed = mix_seed(config.seed, 0x3A000 + epoch);
    double epoch_loss = 0.0;
    double ade_accum = 0.0;
    long ade_count = 0;
    long epoch_batches = 0;

    for (std::size_t b = 0; b < N; b += config.batch_size) {
      const std::size_t e = std::min(b + (std::size_t)config.batch_size, N);
      const std::vector<std::size_t> idx(order.begin() + b, order.begin() + e);
      auto batch = build_multiview_batch(
          store, idx, scorer ? *scorer : VisibilityScorer{}, M,
          config.noise_var, epoch_seed);
      if (config.threshold_scores)
        for (auto& s : batch)
          for (auto& v : s.scores) v = v >= 0.5f ? 1.0f : 0.0f;

      const Eigen::Index B = (Eigen::Index)batch.size();
      MatrixF X(4, B * rows_per_sample);
      for (Eigen::Index i = 0; i < B; ++i) {
        X.col(i * rows_per_sample) = batch[i].primary;
        for (int m = 0; m < M; ++m)
          X.col(i * rows_per_sample + 1 + m) = batch[i].rays[m];
      }

      const auto cache = nn::forward_cached(net, X);
      const MatrixF& pred = cache.post.back();  // 1 x B*(M+1)

      double loss_value = 0.0;
      MatrixF upstream = MatrixF::Zero(1, pred.cols());
      for (Eigen::Index i = 0; i < B; ++i) {
        Eigen::VectorXf pi(rows_per_sample);
        for (int r = 0; r < rows_per_sample; ++r)
          pi[r] = pred(0, i * rows_per_sample + r);
        const auto l = multiview_loss(batch[i], pi, config.norm);
        loss_value += l.value;
        for (int r = 0; r < rows_per_sample; ++r)
          upstream(0, i * rows_per_sample + r) = l.grad[r] / (float)B;
        ade_accum += std::abs((double)pi[0] - batch[i].target) * D * 100.0;
        ++ade_count;
      }
      loss_value /= (double)B;

      if (!std::isfinite(loss_value))
        throw std::runtime_error("NonFiniteLoss at batch " +
                                 std::to_string(epoch_batches) + " of epoch " +
                                 std::to_string(epoch));

      auto grads = nn::backward(net, cache, upstream);

      // radiance branch: multi-view weighted mean-squared color loss
      if (config.radiance) {
        nn::MlpF& rad = *result.model.radiance;
        const MatrixF& hiddenact = cache.post[cache.post.size() - 2];
        const auto rad_cache = nn::forward_cached(rad, hiddenact);
        const MatrixF& rgb = rad_cache.post.back();
        MatrixF rad_up = MatrixF::Zero(3, rgb.cols());
        double rad_loss = 0.0;
        for (Eigen::Index i = 0; i < B; ++i) {
          const Eigen::Vector3f c = (*colors)[idx[i]];
          double vsum = 1.0;
          for (float v : batch[i].scores) vsum += v;
          for (int r = 0; r < rows_per_sample; ++r) {
            const double w = r == 0 ? 1.0 : batch[i].scores[r - 1];
            if (w == 0.0) continue;
            const Eigen::Index col = i * rows_per_sample + r;
            const Eigen::Vector3f err = rgb.col(col) - c;
            rad_loss += w * (double)err.squaredNorm() / 3.0 / vsum;
            rad_up.col(col) =
                (float)(config.radiance_weight * w * 2.0 / (3.0 * vsum * B)) *
                err;
          }
        }
        rad_loss /= (double)B;
        loss_value += config.radiance_weight * rad_loss;
        auto rad_grads = nn::backward(rad, rad_cache, rad_up);
        backward_from_hidden(net, cache, (int)net.layers.size() - 2,
                             rad_grads.input, grads);
        const float lr = (float)nn::lr_at(schedule, step);
        nn::adam_step(rad, rad_grads, adam_rad, lr);
      }

      const float lr = (float)nn::lr_at(schedule, step);
      nn::adam_step(net, grads, adam, lr);
      ++step;

      epoch_loss += loss_value;
      ++epoch_batches;
      if (config.log)
        (*config.log) << step << ' ' << lr << ' ' << loss_value << ' '
                      << (ade_accum / std::max(1L, ade_count)) << '\n';
    }
    result.epoch_loss.push_back(epoch_loss / std::max(1L, epoch_batches));
    if (!config.checkpoint_dir.empty()) {
      nn::save_checkpoint(config.checkpoint_dir + "/distance_epoch_" +
                              std::to_string(epoch + 1) + ".ckpt",
                          net);
      if (result.model.radiance)
        nn::save_checkpoint(config.checkpoint_dir + "/radiance_epoch_" +
                                std::to_string(epoch + 1) + ".ckpt",
                            *result.model.radiance);
    }
  }
  return result;
}

}  // namespace raydf::training
