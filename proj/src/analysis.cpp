#include "lamnet/analysis.hpp"

#include <ostream>
#include <stdexcept>

namespace lamnet {

const char* part_name(Part p) {
  switch (p) {
    case Part::mixer: return "mixer";
    case Part::ffn: return "ffn";
    case Part::total: return "total";
    case Part::other: return "other";
  }
  return "?";
}

namespace {

int64_t exact_div(int64_t num, int64_t den) {
  if (num % den != 0)
    throw std::logic_error("closed_form: non-integer intermediate (" + std::to_string(num) +
                           "/" + std::to_string(den) + ")");
  return num / den;
}

}  // namespace

Cost closed_form(Arch arch, Part part, int64_t C, int64_t K, int64_t G, int64_t H, int64_t W) {
  if (C <= 0 || C % 2 != 0) throw std::invalid_argument("closed_form: C must be positive even");
  if (K <= 0 || G <= 0 || H <= 0 || W <= 0)
    throw std::invalid_argument("closed_form: K, G, H, W must be positive");
  if (part == Part::other) throw std::invalid_argument("closed_form: part must be mixer/ffn/total");
  if (part == Part::total) {
    Cost m = closed_form(arch, Part::mixer, C, K, G, H, W);
    Cost f = closed_form(arch, Part::ffn, C, K, G, H, W);
    return {m.params + f.params, m.flops + f.flops};
  }
  const int64_t HW = H * W;
  Cost c;
  switch (arch) {
    case Arch::swinir:
      if (part == Part::mixer) {
        c.params = 4 * C * C + K * K * K * K;
        c.flops = 4 * HW * C * C + 2 * K * K * HW * C;
      } else {
        c.params = 4 * C * C;
        c.flops = 4 * HW * C * C + 2 * HW * C;
      }
      break;
    case Arch::dlgsanet:
      if (part == Part::mixer) {
        c.params = exact_div(5 * C * C, 2) + exact_div((G + 1) * K * K * C, 2);
        c.flops = exact_div(5 * HW * C * C, 2) + exact_div((G + 3) * K * K * HW * C, 2);
      } else {
        c.params = 3 * C * C + 18 * C;
        c.flops = 3 * HW * C * C + 20 * HW * C;
      }
      break;
    case Arch::lamnet:
      if (part == Part::mixer) {
        c.params = exact_div(5 * C * C, 2) + (G + 1) * K * C;
        c.flops = exact_div(5 * HW * C * C, 2) + (G + 2) * K * HW * C;
      } else {
        c.params = 4 * C * C + 18 * C;
        c.flops = 4 * HW * C * C + 21 * HW * C;
      }
      break;
  }
  return c;
}

int64_t CostReport::total_params() const {
  int64_t s = 0;
  for (const CostRow& r : rows) s += r.params;
  return s;
}

int64_t CostReport::total_flops() const {
  int64_t s = 0;
  for (const CostRow& r : rows) s += r.flops;
  return s;
}

Cost CostReport::part_cost(Part p) const {
  Cost c;
  for (const CostRow& r : rows)
    if (r.part == p) {
      c.params += r.params;
      c.flops += r.flops;
    }
  return c;
}

void CostReport::write_csv(std::ostream& os) const {
  os << "name,part,params,flops\n";
  for (const CostRow& r : rows)
    os << r.name << "," << part_name(r.part) << "," << r.params << "," << r.flops << "\n";
  os << "total,total," << total_params() << "," << total_flops() << "\n";
}

namespace {

struct Counter {
  CostReport report;
  CostPolicy policy;
  int64_t h = 0, w = 0;

  int64_t hw() const { return h * w; }

  void conv_row(const std::string& name, Part part, const ConvParams& p) {
    const Shape4 ws = p.weight.shape();
    CostRow row{name, part, ws.numel(), hw() * ws.n * ws.c * ws.h * ws.w};
    if (p.has_bias()) {
      if (policy.include_bias) row.params += p.bias.numel();
      // bias adds are additions: free under the convention
    }
    push(row);
  }

  void norm_row(const std::string& name, const Tensor& gamma, const Tensor& beta) {
    if (!policy.include_norm) return;
    // Multiplies only: variance MACs, inv-std, gamma scaling, mean/var scale.
    CostRow row{name, Part::other, gamma.numel() + beta.numel(),
                (3 * gamma.shape().c + 3) * hw()};
    push(row);
  }

  void flops_row(const std::string& name, Part part, int64_t flops) {
    push({name, part, 0, flops});
  }

  void push(CostRow row) {
    row.flops *= policy.flops_per_mac;
    report.rows.push_back(std::move(row));
  }
};

}  // namespace

CostReport count_model(const Model& model, int64_t h, int64_t w, const CostPolicy& policy) {
  if (h <= 0 || w <= 0) throw std::invalid_argument("count_model: resolution must be positive");
  Counter ctr;
  ctr.policy = policy;
  ctr.report.policy = policy;
  ctr.h = h;
  ctr.w = w;
  const int64_t C = model.config.channels;
  const int64_t half = C / 2;
  const int64_t G = model.config.groups;
  const int64_t K = kernel_len(model.config.focal);
  const int64_t R = receptive_field(model.config.focal);
  const int64_t HW = h * w;

  ctr.conv_row("shallow", Part::other, model.shallow);
  for (size_t b = 0; b < model.blocks.size(); ++b)
    for (size_t p = 0; p < model.blocks[b].pairs.size(); ++p) {
      const PairParams& pair = model.blocks[b].pairs[p];
      const std::string prefix = "block" + std::to_string(b) + ".pair" + std::to_string(p);
      ctr.norm_row(prefix + ".ln1", pair.ln1_gamma, pair.ln1_beta);
      ctr.conv_row(prefix + ".ulm.in_proj", Part::mixer, pair.ulm.in_proj);
      // one aggregation per axis: agent pooling (scaled adds, outside the
      // closed form), weight generation, weighted gather
      for (const char* axis : {"h", "v"}) {
        const AxisWeightGen& gen =
            axis[0] == 'h' ? pair.ulm.spatial.h_gen : pair.ulm.spatial.v_gen;
        const std::string ax = prefix + ".ulm.lsam." + axis;
        ctr.flops_row(ax + ".pool", Part::other, half * HW * (R - 1));
        ctr.conv_row(ax + ".dw", Part::mixer, gen.dw);
        ctr.conv_row(ax + ".pw", Part::mixer, gen.pw);
        ctr.flops_row(ax + ".apply", Part::mixer, half * K * HW);
      }
      ctr.conv_row(prefix + ".ulm.csm.sqz", Part::mixer, pair.ulm.csm.sqz);
      ctr.conv_row(prefix + ".ulm.csm.exp", Part::mixer, pair.ulm.csm.exp);
      // IEM: two gating dots + two gating scalings + sigmoid evaluations
      ctr.flops_row(prefix + ".ulm.iem", Part::other, 4 * half * HW + half + HW);
      ctr.conv_row(prefix + ".ulm.out_proj", Part::mixer, pair.ulm.out_proj);
      ctr.norm_row(prefix + ".ln2", pair.ln2_gamma, pair.ln2_beta);
      ctr.conv_row(prefix + ".dgfn.exp1", Part::ffn, pair.dgfn.exp1);
      ctr.conv_row(prefix + ".dgfn.dw", Part::ffn, pair.dgfn.dw);
      ctr.flops_row(prefix + ".dgfn.gelu", Part::ffn, C * HW);
      ctr.flops_row(prefix + ".dgfn.gate", Part::ffn, 2 * C * HW);
      ctr.conv_row(prefix + ".dgfn.sqz", Part::ffn, pair.dgfn.sqz);
    }
  ctr.conv_row("trunk", Part::other, model.trunk);
  ctr.conv_row("rec", Part::other, model.rec);
  return ctr.report;
}

std::vector<KSweepRow> k_sweep(std::span<const FocalSpec> specs, int64_t C, int64_t G,
                               int64_t H, int64_t W) {
  std::vector<KSweepRow> rows;
  rows.reserve(specs.size());
  for (const FocalSpec& spec : specs) {
    KSweepRow row;
    row.k = kernel_len(spec);
    row.r = receptive_field(spec);
    row.fsa_mixer_flops = closed_form(Arch::lamnet, Part::mixer, C, row.k, G, H, W).flops;
    row.window_mixer_flops = closed_form(Arch::swinir, Part::mixer, C, row.k, G, H, W).flops;
    rows.push_back(row);
  }
  return rows;
}

void write_k_sweep_csv(std::ostream& os, std::span<const KSweepRow> rows) {
  os << "k,r,fsa_mixer_flops,window_mixer_flops\n";
  for (const KSweepRow& r : rows)
    os << r.k << "," << r.r << "," << r.fsa_mixer_flops << "," << r.window_mixer_flops << "\n";
}

}  // namespace lamnet
