#include "avgzsl/losses.hpp"

#include <algorithm>
#include <string>

namespace avgzsl::losses {

double mse_distance(const Vec& u, const Vec& v) {
  if (u.size() != v.size()) throw tensor::DimensionError("mse_distance", u.size(), v.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    acc += d * d;
  }
  return acc / static_cast<double>(u.size());
}

double triplet_hinge(double d_pos, double d_neg, double margin) {
  return std::max(0.0, d_pos - d_neg + margin);
}

double loss_rec(const TuplePair& pair, const ModelParams& params) {
  const Vec t_p = model::embed_text(params, pair.p.text);
  const Vec a_p = model::embed_audio(params, pair.p.audio);
  const Vec v_p = model::embed_video(params, pair.p.video);
  return mse_distance(model::decode(params, t_p), pair.p.text) +
         mse_distance(model::decode(params, a_p), pair.p.text) +
         mse_distance(model::decode(params, v_p), pair.p.text);
}

double loss_cta(const TuplePair& pair, const ModelParams& params, double margin) {
  const Vec dec_tp = model::decode(params, model::embed_text(params, pair.p.text));
  const Vec dec_ap = model::decode(params, model::embed_audio(params, pair.p.audio));
  const Vec dec_aq = model::decode(params, model::embed_audio(params, pair.q.audio));
  return triplet_hinge(mse_distance(dec_tp, dec_ap), mse_distance(dec_tp, dec_aq), margin);
}

double loss_ctv(const TuplePair& pair, const ModelParams& params, double margin) {
  const Vec dec_tp = model::decode(params, model::embed_text(params, pair.p.text));
  const Vec dec_vp = model::decode(params, model::embed_video(params, pair.p.video));
  const Vec dec_vq = model::decode(params, model::embed_video(params, pair.q.video));
  return triplet_hinge(mse_distance(dec_tp, dec_vp), mse_distance(dec_tp, dec_vq), margin);
}

double loss_cmd(const TuplePair& pair, const ModelParams& params, const LossConfig& config) {
  double acc = 0.0;
  if (config.use_rec) acc += loss_rec(pair, params);
  if (config.use_cta) acc += loss_cta(pair, params, config.margin);
  if (config.use_ctv) acc += loss_ctv(pair, params, config.margin);
  return acc;
}

double loss_ta(const TuplePair& pair, const ModelParams& params, double margin) {
  const Vec t_p = model::embed_text(params, pair.p.text);
  const Vec a_p = model::embed_audio(params, pair.p.audio);
  const Vec a_q = model::embed_audio(params, pair.q.audio);
  return triplet_hinge(mse_distance(a_p, t_p), mse_distance(a_q, t_p), margin);
}

double loss_at(const TuplePair& pair, const ModelParams& params, double margin) {
  const Vec t_p = model::embed_text(params, pair.p.text);
  const Vec t_q = model::embed_text(params, pair.q.text);
  const Vec a_p = model::embed_audio(params, pair.p.audio);
  return triplet_hinge(mse_distance(t_p, a_p), mse_distance(t_q, a_p), margin);
}

double loss_tv(const TuplePair& pair, const ModelParams& params, double margin) {
  const Vec t_p = model::embed_text(params, pair.p.text);
  const Vec v_p = model::embed_video(params, pair.p.video);
  const Vec v_q = model::embed_video(params, pair.q.video);
  return triplet_hinge(mse_distance(v_p, t_p), mse_distance(v_q, t_p), margin);
}

double loss_vt(const TuplePair& pair, const ModelParams& params, double margin) {
  const Vec t_p = model::embed_text(params, pair.p.text);
  const Vec t_q = model::embed_text(params, pair.q.text);
  const Vec v_p = model::embed_video(params, pair.p.video);
  return triplet_hinge(mse_distance(t_p, v_p), mse_distance(t_q, v_p), margin);
}

double loss_ct(const TuplePair& pair, const ModelParams& params, const LossConfig& config) {
  double acc = 0.0;
  if (config.use_tv) acc += loss_tv(pair, params, config.margin);
  if (config.use_vt) acc += loss_vt(pair, params, config.margin);
  if (config.use_ta) acc += loss_ta(pair, params, config.margin);
  if (config.use_at) acc += loss_at(pair, params, config.margin);
  return acc;
}

namespace {

void validate_batch(std::span<const TuplePair> batch) {
  if (batch.empty()) throw BatchError("total_loss: empty batch");
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].p.class_id == batch[i].q.class_id) {
      throw BatchError("total_loss: pair " + std::to_string(i) +
                       " has equal class ids (" + std::to_string(batch[i].p.class_id) + ")");
    }
  }
}

}  // namespace

std::pair<double, LossReport> total_loss(std::span<const TuplePair> batch,
                                         const ModelParams& params,
                                         const LossConfig& config) {
  validate_batch(batch);
  LossReport r;
  for (const TuplePair& pair : batch) {
    if (config.use_rec) r.l_rec += loss_rec(pair, params);
    if (config.use_cta) r.l_cta += loss_cta(pair, params, config.margin);
    if (config.use_ctv) r.l_ctv += loss_ctv(pair, params, config.margin);
    if (config.use_tv) r.l_tv += loss_tv(pair, params, config.margin);
    if (config.use_vt) r.l_vt += loss_vt(pair, params, config.margin);
    if (config.use_ta) r.l_ta += loss_ta(pair, params, config.margin);
    if (config.use_at) r.l_at += loss_at(pair, params, config.margin);
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  r.l_rec *= inv_n;
  r.l_cta *= inv_n;
  r.l_ctv *= inv_n;
  r.l_tv *= inv_n;
  r.l_vt *= inv_n;
  r.l_ta *= inv_n;
  r.l_at *= inv_n;
  r.l_cmd = r.l_rec + r.l_cta + r.l_ctv;
  r.l_ct = r.l_tv + r.l_vt + r.l_ta + r.l_at;
  r.total = r.l_cmd + r.l_ct;
  return {r.total, r};
}

VarId total_loss_taped(model::TapedModel& taped, std::span<const TuplePair> batch,
                       const LossConfig& config, LossReport* report) {
  validate_batch(batch);
  Tape& tape = taped.tape();
  const double margin = config.margin;

  VarId sum_rec, sum_cta, sum_ctv, sum_tv, sum_vt, sum_ta, sum_at;
  auto accumulate = [&tape](VarId& acc, VarId term) {
    acc = acc.valid() ? tape.add(acc, term) : term;
  };

  for (const TuplePair& pair : batch) {
    const VarId x_tp = tape.leaf(pair.p.text);
    const VarId t_p = taped.embed_text(x_tp);
    const VarId a_p = taped.embed_audio(tape.leaf(pair.p.audio));
    const VarId v_p = taped.embed_video(tape.leaf(pair.p.video));

    const bool need_q_text = config.use_at || config.use_vt;
    const bool need_q_audio = config.use_cta || config.use_ta;
    const bool need_q_video = config.use_ctv || config.use_tv;
    const VarId t_q = need_q_text ? taped.embed_text(tape.leaf(pair.q.text)) : VarId{};
    const VarId a_q = need_q_audio ? taped.embed_audio(tape.leaf(pair.q.audio)) : VarId{};
    const VarId v_q = need_q_video ? taped.embed_video(tape.leaf(pair.q.video)) : VarId{};

    auto hinge = [&tape, margin](VarId d_pos, VarId d_neg) {
      return tape.relu(tape.add_scalar(tape.sub(d_pos, d_neg), margin));
    };

    if (config.use_rec || config.use_cta || config.use_ctv) {
      const VarId dec_tp = taped.decode(t_p);
      if (config.use_rec) {
        const VarId dec_ap = taped.decode(a_p);
        const VarId dec_vp = taped.decode(v_p);
        VarId rec = tape.add(tape.add(tape.mse(dec_tp, x_tp), tape.mse(dec_ap, x_tp)),
                             tape.mse(dec_vp, x_tp));
        accumulate(sum_rec, rec);
      }
      if (config.use_cta) {
        const VarId dec_ap = taped.decode(a_p);
        const VarId dec_aq = taped.decode(a_q);
        accumulate(sum_cta, hinge(tape.mse(dec_tp, dec_ap), tape.mse(dec_tp, dec_aq)));
      }
      if (config.use_ctv) {
        const VarId dec_vp = taped.decode(v_p);
        const VarId dec_vq = taped.decode(v_q);
        accumulate(sum_ctv, hinge(tape.mse(dec_tp, dec_vp), tape.mse(dec_tp, dec_vq)));
      }
    }
    if (config.use_tv) accumulate(sum_tv, hinge(tape.mse(v_p, t_p), tape.mse(v_q, t_p)));
    if (config.use_vt) accumulate(sum_vt, hinge(tape.mse(t_p, v_p), tape.mse(t_q, v_p)));
    if (config.use_ta) accumulate(sum_ta, hinge(tape.mse(a_p, t_p), tape.mse(a_q, t_p)));
    if (config.use_at) accumulate(sum_at, hinge(tape.mse(t_p, a_p), tape.mse(t_q, a_p)));
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  auto mean_of = [&tape, inv_n](VarId sum) {
    return sum.valid() ? tape.scale(sum, inv_n) : tape.zero_scalar();
  };
  const VarId m_rec = mean_of(sum_rec);
  const VarId m_cta = mean_of(sum_cta);
  const VarId m_ctv = mean_of(sum_ctv);
  const VarId m_tv = mean_of(sum_tv);
  const VarId m_vt = mean_of(sum_vt);
  const VarId m_ta = mean_of(sum_ta);
  const VarId m_at = mean_of(sum_at);

  const VarId cmd = tape.add(tape.add(m_rec, m_cta), m_ctv);
  const VarId ct = tape.add(tape.add(tape.add(m_tv, m_vt), m_ta), m_at);
  const VarId total = tape.add(cmd, ct);

  if (report != nullptr) {
    report->l_rec = tape.scalar_value(m_rec);
    report->l_cta = tape.scalar_value(m_cta);
    report->l_ctv = tape.scalar_value(m_ctv);
    report->l_tv = tape.scalar_value(m_tv);
    report->l_vt = tape.scalar_value(m_vt);
    report->l_ta = tape.scalar_value(m_ta);
    report->l_at = tape.scalar_value(m_at);
    report->l_cmd = tape.scalar_value(cmd);
    report->l_ct = tape.scalar_value(ct);
    report->total = tape.scalar_value(total);
  }
  return total;
}

}  // namespace avgzsl::losses
