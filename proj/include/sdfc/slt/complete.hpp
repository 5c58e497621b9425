#pragma once

#include "sdfc/pvae/model.hpp"
#include "sdfc/slt/model.hpp"

namespace sdfc::slt {

struct CompleteOptions {
    /// Keep the original latents of known slots when decoding (the transformer
    /// output is still computed for every slot). Disabling decodes the
    /// transformer output everywhere.
    bool passthrough_known = true;
    int decode_chunk = 8;
};

struct CompletionResult {
    SdfGrid grid;
    LatentSequence input_codes;   // encoder codes, zeros at unknown slots
    LatentSequence predicted;     // transformer output for all slots
    LatentSequence decoded;       // codes actually decoded per slot
    MaskSpec mask;                // true = was unknown
};

/// Fills the unknown slots of a partially known patch grid: encode the known
/// patches, run the completion transformer once with the unknown slots
/// masked, decode all slots, and reassemble the full SDF volume.
inline CompletionResult complete_detailed(const PatchGrid& partial, const pvae::PvaeModel& vae,
                                          const SltModel& slt, const CompleteOptions& opts = {}) {
    const int g = partial.grid_dim;
    const int n = partial.slot_count();
    const int d = vae.latent_dim();
    if (d != slt.config().latent_dim)
        throw ShapeMismatch("complete: VAE D " + std::to_string(d) + " vs SLT D " +
                                std::to_string(slt.config().latent_dim));
    if (partial.known_count() == 0)
        throw NoKnownPatches("complete: every patch slot is unknown");

    CompletionResult res;
    res.mask.masked.assign(n, true);

    // encode known patches (known-empty patches included; they still carry
    // valid distances)
    std::vector<Patch> known;
    std::vector<int> known_slots;
    for (int s = 0; s < n; ++s) {
        if (partial.slots[s]) {
            known.push_back(*partial.slots[s]);
            known_slots.push_back(s);
            res.mask.masked[s] = false;
        }
    }
    const auto latents = vae.encode_batch(known);

    LatentSequence seq;
    seq.n = n;
    seq.d = d;
    seq.codes.assign(static_cast<std::size_t>(n) * d, 0.0f);
    seq.positions.resize(n);
    for (int k = 0; k < g; ++k)
        for (int j = 0; j < g; ++j)
            for (int i = 0; i < g; ++i)
                seq.positions[partial.slot_index(i, j, k)] = partial.slot_center(i, j, k);
    for (std::size_t ki = 0; ki < known_slots.size(); ++ki)
        std::copy_n(latents[ki].mu.data(), d, seq.code(known_slots[ki]));

    res.input_codes = seq;
    res.predicted = slt.forward(seq, res.mask);

    // choose decode codes: pass-through keeps known-slot inputs bit-exactly
    res.decoded = res.predicted;
    if (opts.passthrough_known)
        for (int s : known_slots) std::copy_n(seq.code(s), d, res.decoded.code(s));

    // decode in chunks and reassemble
    PatchGrid full(g, partial.parent_resolution);
    const double side = full.patch_side();
    for (int at = 0; at < n; at += opts.decode_chunk) {
        const int cnt = std::min(opts.decode_chunk, n - at);
        std::vector<std::vector<float>> codes(cnt);
        for (int i = 0; i < cnt; ++i)
            codes[i].assign(res.decoded.code(at + i), res.decoded.code(at + i) + d);
        const auto values = vae.decode_batch(codes);
        for (int i = 0; i < cnt; ++i) {
            const int s = at + i;
            const int si = s % g, sj = (s / g) % g, sk = s / (g * g);
            Patch p(side, full.slot_center(si, sj, sk));
            p.values = values[i];
            full.slots[s] = std::move(p);
        }
    }
    res.grid = assemble(full);
    return res;
}

inline SdfGrid complete(const PatchGrid& partial, const pvae::PvaeModel& vae, const SltModel& slt,
                        const CompleteOptions& opts = {}) {
    return complete_detailed(partial, vae, slt, opts).grid;
}

}  // namespace sdfc::slt
