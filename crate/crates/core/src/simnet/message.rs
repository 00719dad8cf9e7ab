use std::collections::BTreeSet;

use serde::Serialize;

use super::{OpId, Tick};
use crate::id::{Key, NodeId};
use crate::store::protocol::{
    LookupMsg, LookupReplyMsg, PublishAckMsg, PublishMsg, RemoveMsg, RemoveOutcome, TransferMsg,
    TransferReason,
};
use crate::store::ComponentPayload;

/// Coarse message classes used for accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    Join,
    RouteStep,
    Lookup,
    Publish,
    Remove,
    Transfer,
    Repair,
    Ack,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::Join => "JOIN",
            MessageKind::RouteStep => "ROUTE_STEP",
            MessageKind::Lookup => "LOOKUP",
            MessageKind::Publish => "PUBLISH",
            MessageKind::Remove => "REMOVE",
            MessageKind::Transfer => "TRANSFER",
            MessageKind::Repair => "REPAIR",
            MessageKind::Ack => "ACK",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RouteMsg {
    pub op: OpId,
    pub key: Key,
    pub path: Vec<NodeId>,
    pub retries: u8,
}

#[derive(Debug, Clone)]
pub enum Body {
    RouteProbe(RouteMsg),
    RouteDone {
        op: OpId,
        path: Vec<NodeId>,
    },
    JoinRequest {
        joiner: NodeId,
        path: Vec<NodeId>,
        contacts: BTreeSet<NodeId>,
        retries: u8,
    },
    JoinReply {
        path: Vec<NodeId>,
        contacts: BTreeSet<NodeId>,
    },
    Announce,
    Departure,
    StateRequest,
    StateReply {
        ids: Vec<NodeId>,
    },
    /// A routed operation gave up; sent to its originator.
    OpFailed {
        op: OpId,
        path: Vec<NodeId>,
    },
    Publish(PublishMsg),
    PublishAck(PublishAckMsg),
    PublishNack {
        op: OpId,
        key: Key,
        rollback: bool,
    },
    Lookup(LookupMsg),
    Fetch {
        lookup: LookupMsg,
        remaining: Vec<NodeId>,
        unreachable: bool,
    },
    FetchReply {
        lookup: LookupMsg,
        remaining: Vec<NodeId>,
        unreachable: bool,
        payload: Option<ComponentPayload>,
    },
    LookupReply(LookupReplyMsg),
    LookupMiss {
        op: OpId,
        unavailable: bool,
        path: Vec<NodeId>,
    },
    Remove(RemoveMsg),
    RemoveReply {
        op: OpId,
        key: Key,
        outcome: RemoveOutcome,
    },
    Transfer(TransferMsg),
    TransferAck {
        key: Key,
        reason: TransferReason,
    },
}

impl Body {
    pub fn kind(&self) -> MessageKind {
        match self {
            Body::RouteProbe(_) => MessageKind::RouteStep,
            Body::JoinRequest { .. } | Body::JoinReply { .. } | Body::Announce => MessageKind::Join,
            Body::Departure | Body::StateRequest | Body::StateReply { .. } => MessageKind::Repair,
            Body::Publish(_) => MessageKind::Publish,
            Body::Lookup(_)
            | Body::Fetch { .. }
            | Body::FetchReply { .. }
            | Body::LookupReply(_)
            | Body::LookupMiss { .. } => MessageKind::Lookup,
            Body::Remove(_) => MessageKind::Remove,
            Body::Transfer(_) => MessageKind::Transfer,
            Body::RouteDone { .. }
            | Body::OpFailed { .. }
            | Body::PublishAck(_)
            | Body::PublishNack { .. }
            | Body::RemoveReply { .. }
            | Body::TransferAck { .. } => MessageKind::Ack,
        }
    }

    pub(crate) fn is_store(&self) -> bool {
        matches!(
            self,
            Body::Publish(_)
                | Body::PublishAck(_)
                | Body::PublishNack { .. }
                | Body::Lookup(_)
                | Body::Fetch { .. }
                | Body::FetchReply { .. }
                | Body::LookupReply(_)
                | Body::LookupMiss { .. }
                | Body::Remove(_)
                | Body::RemoveReply { .. }
                | Body::Transfer(_)
                | Body::TransferAck { .. }
        )
    }
}

#[derive(Debug, Clone)]
pub struct Message {
    pub from: NodeId,
    pub to: NodeId,
    pub corr: u64,
    pub sent_at: Tick,
    pub deadline: Tick,
    pub body: Body,
}
