"""Front-ends: games, channel coding, extractors and the CS+ cone."""
from .common import EnumerationTooLarge
from .games import (Game, chsh, game_classical_value, game_rules, game_sdp_value,
                    game_to_problem)
from .channel import (Channel, channel_classical_value, channel_rules, channel_sdp_value,
                      channel_to_problem, z_channel)
from .protocol import (InvalidPOVM, NotAState, QuantumProtocol, evaluate_protocol,
                       four_dim_protocol, helstrom)
from .extractor import (GROTHENDIECK_KG, Extractor, NonIntegralSupport, Variant,
                        extractor_bound_check, extractor_classical_err, extractor_sdp_value,
                        extractor_to_problem, extractor_to_sdp1, parity_fixture)
from .csplus import (MembershipResult, Verdict, csplus_membership, csplus_optimize, k_matrix,
                     margin_instance)
