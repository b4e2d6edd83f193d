use super::StackError;
use crate::binder::Binder;
use crate::mode_selection::PeeringTable;
use crate::types::{Destination, FlowDirection, Mode, NodeId, Role};

/// The PDCP fork: picks the direction a packet from `src` to `dst` takes.
///
/// Multicast destinations always go over the sidelink. A unicast destination
/// goes over the sidelink only when it is a listed peer of `src` and that pair
/// is currently in direct mode; everything else is sent up to the eNB. Packets
/// generated by the eNB itself are downlink.
pub fn pdcp_classify(
    src: NodeId,
    dst: &Destination,
    binder: &Binder,
    peering: &PeeringTable,
) -> Result<FlowDirection, StackError> {
    let sender = binder.node(src)?;
    match *dst {
        Destination::Group(group) => {
            binder
                .group_members(group)
                .map_err(|_| StackError::UnresolvableDestination(group.to_string()))?;
            Ok(FlowDirection::D2dMulti)
        }
        Destination::Node(node) => {
            binder
                .node(node)
                .map_err(|_| StackError::UnresolvableDestination(node.to_string()))?;
            if sender.role == Role::ENodeB {
                return Ok(FlowDirection::Dl);
            }
            Ok(match peering.mode(src, node) {
                Some(Mode::Dm) => FlowDirection::D2d,
                Some(Mode::Im) | None => FlowDirection::Ul,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binder::NodeRecord;
    use crate::types::Position;

    fn setup() -> (Binder, PeeringTable) {
        let mut b = Binder::new(50);
        for (name, role) in [
            ("eNodeB", Role::ENodeB),
            ("ueD2DTx[0]", Role::Ue),
            ("ueD2DRx[0]", Role::Ue),
            ("server", Role::Ue),
        ] {
            b.register_node(NodeRecord::new(name, role, Position::default(), true))
                .unwrap();
        }
        b.register_group("224.0.0.10".parse().unwrap(), [NodeId(2)]).unwrap();
        let mut p = PeeringTable::default();
        p.insert(NodeId(1), NodeId(2), Mode::Dm);
        (b, p)
    }

    #[test]
    fn multicast_goes_d2d_multi() {
        let (b, p) = setup();
        let dst = Destination::Group("224.0.0.10".parse().unwrap());
        assert_eq!(pdcp_classify(NodeId(1), &dst, &b, &p).unwrap(), FlowDirection::D2dMulti);
    }

    #[test]
    fn peer_in_direct_mode_goes_d2d_and_flips_with_mode() {
        let (b, mut p) = setup();
        let dst = Destination::Node(NodeId(2));
        assert_eq!(pdcp_classify(NodeId(1), &dst, &b, &p).unwrap(), FlowDirection::D2d);
        p.set_mode(NodeId(1), NodeId(2), Mode::Im);
        assert_eq!(pdcp_classify(NodeId(1), &dst, &b, &p).unwrap(), FlowDirection::Ul);
    }

    #[test]
    fn peering_is_one_way() {
        let (b, p) = setup();
        let dst = Destination::Node(NodeId(1));
        assert_eq!(pdcp_classify(NodeId(2), &dst, &b, &p).unwrap(), FlowDirection::Ul);
    }

    #[test]
    fn non_peer_goes_up() {
        let (b, p) = setup();
        assert_eq!(
            pdcp_classify(NodeId(1), &Destination::Node(NodeId(3)), &b, &p).unwrap(),
            FlowDirection::Ul
        );
        assert_eq!(
            pdcp_classify(NodeId(0), &Destination::Node(NodeId(3)), &b, &p).unwrap(),
            FlowDirection::Dl
        );
    }

    #[test]
    fn unknown_destination() {
        let (b, p) = setup();
        assert!(matches!(
            pdcp_classify(NodeId(1), &Destination::Node(NodeId(9)), &b, &p),
            Err(StackError::UnresolvableDestination(_))
        ));
        assert!(matches!(
            pdcp_classify(NodeId(1), &Destination::Group("224.0.0.99".parse().unwrap()), &b, &p),
            Err(StackError::UnresolvableDestination(_))
        ));
    }
}
