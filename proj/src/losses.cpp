#include "pm/losses.hpp"

#include <cmath>

namespace pm {

TensorPtr detach(const TensorPtr& t) {
  auto c = Tensor::create(t->shape);
  c->data = t->data;
  return c;
}

std::pair<TensorPtr, TensorPtr> stage_loss(Graph& g, const StageOutput& pred,
                                           const TensorPtr& target_heatmaps,
                                           const TensorPtr& target_pafs,
                                           const std::string& name) {
  auto f1 = l2_sum(g, pred.heatmaps, target_heatmaps, name + ".heat");
  auto f2 = l2_sum(g, pred.pafs, target_pafs, name + ".paf");
  return {f1, f2};
}

TensorPtr pose_loss(Graph& g, const std::vector<StageOutput>& stages,
                    const TensorPtr& target_heatmaps,
                    const TensorPtr& target_pafs, LossBreakdown* bd) {
  if (stages.empty()) throw config_error("pose_loss: no stages");
  std::vector<TensorPtr> terms;
  for (size_t s = 0; s < stages.size(); ++s) {
    auto [f1, f2] = stage_loss(g, stages[s], target_heatmaps, target_pafs,
                               "stage" + std::to_string(s + 1) + ".loss");
    if (bd) {
      bd->stage_heatmap.push_back(f1->item64());
      bd->stage_paf.push_back(f2->item64());
    }
    terms.push_back(f1);
    terms.push_back(f2);
  }
  auto total = terms.size() == 1 ? terms[0]
                                 : sum_scalars(g, terms, "pose_loss");
  if (bd) bd->pose = total->item64();
  return total;
}

TensorPtr domain_loss(Graph& g, const TensorPtr& probs,
                      const std::vector<float>& labels) {
  for (float l : labels)
    if (l != 0.f && l != 1.f)
      throw config_error("domain_loss: labels must be 0 or 1");
  return bce_mean(g, probs, labels, "domain_loss");
}

double lambda_schedule(double p, double Lambda) {
  return 2.0 * Lambda / (1.0 + std::exp(-10.0 * p)) - Lambda;
}

TensorPtr ada_objective(Graph& g, const TensorPtr& pose,
                        const TensorPtr& domain, float lambda) {
  if (lambda == 0.f) return pose;
  auto weighted = lambda == 1.f ? domain : scale(g, domain, lambda, "ada.dom");
  return add(g, pose, weighted, "ada_objective");
}

TensorPtr distill_loss(Graph& g, const std::vector<StageOutput>& student,
                       const std::vector<StageOutput>& teacher,
                       const TensorPtr& target_heatmaps,
                       const TensorPtr& target_pafs, const DistillConfig& cfg,
                       const TensorPtr& student_features,
                       const TensorPtr& teacher_features, LossBreakdown* bd) {
  if (cfg.tau < 1) throw config_error("distill_loss: tau must be >= 1");
  if (static_cast<size_t>(cfg.tau) > student.size() ||
      static_cast<size_t>(cfg.tau) > teacher.size())
    throw config_error("distill_loss: tau exceeds a cascade depth");
  if (cfg.alpha < 0.f || cfg.alpha > 1.f)
    throw config_error("distill_loss: alpha outside [0, 1]");
  bool hints = cfg.use_hints && cfg.gamma != 0.f;
  if (hints) {
    if (!student_features || !teacher_features)
      throw config_error("distill_loss: hints need both feature tensors");
    if (student_features->shape != teacher_features->shape)
      throw shape_error("distill_loss: feature shapes differ");
  }

  std::vector<TensorPtr> terms;

  if (cfg.alpha < 1.f) {
    std::vector<TensorPtr> imitation;
    for (int s = 0; s < cfg.tau; ++s) {
      const auto& stu = student[student.size() - 1 - s];
      const auto& tea = teacher[teacher.size() - 1 - s];
      std::string nm = "distill.s" + std::to_string(s);
      imitation.push_back(
          l2_sum(g, stu.heatmaps, detach(tea.heatmaps), nm + ".heat"));
      imitation.push_back(l2_sum(g, stu.pafs, detach(tea.pafs), nm + ".paf"));
    }
    auto tea_term = imitation.size() == 1
                        ? imitation[0]
                        : sum_scalars(g, imitation, "distill.teacher");
    if (bd) bd->teacher = tea_term->item64();
    terms.push_back(cfg.alpha == 0.f
                        ? tea_term
                        : scale(g, tea_term, 1.f - cfg.alpha, "distill.tw"));
  }

  if (cfg.alpha > 0.f) {
    auto skel = pose_loss(g, student, target_heatmaps, target_pafs, bd);
    terms.push_back(cfg.alpha == 1.f ? skel
                                     : scale(g, skel, cfg.alpha, "distill.sw"));
  }

  if (hints) {
    auto h = l2_sum(g, student_features, detach(teacher_features),
                    "distill.hints");
    if (bd) bd->hints = h->item64();
    terms.push_back(cfg.gamma == 1.f ? h
                                     : scale(g, h, cfg.gamma, "distill.hw"));
  }

  auto total = terms.size() == 1 ? terms[0]
                                 : sum_scalars(g, terms, "distill_loss");
  if (bd) bd->total = total->item64();
  return total;
}

}  // namespace pm
